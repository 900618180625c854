use crate::error::{GraphError, Result};

/// Dense row-major array of `f64`.
///
/// A rank-0 tensor (empty shape) holds exactly one value and is used for
/// scalars throughout the engine.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) || numel(&shape) != data.len() {
            return Err(GraphError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel(shape)],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.data.len() {
            return Err(GraphError::ShapeMismatch {
                node: "reshape".into(),
                expected: shape.to_vec(),
                actual: self.shape,
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Element at a multi-index.
    pub fn at(&self, index: &[usize]) -> f64 {
        self.data[flat_index(&self.shape, index)]
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub(crate) fn flat_index(shape: &[usize], index: &[usize]) -> usize {
    debug_assert_eq!(shape.len(), index.len());
    index
        .iter()
        .zip(shape)
        .fold(0, |acc, (&i, &d)| acc * d + i)
}

/// Splits `shape` around `axis` into (outer, axis length, inner) extents.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = numel(&shape[..axis]);
    let len = shape[axis];
    let inner = numel(&shape[axis + 1..]);
    (outer, len, inner)
}

/// Numpy-style broadcast of two shapes, trailing dimensions aligned.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `input` laid over `target` (0 on broadcast axes).
pub(crate) fn broadcast_strides(input: &[usize], target: &[usize]) -> Vec<usize> {
    let rank = target.len();
    let offset = rank - input.len();
    let mut strides = vec![0; rank];
    let mut stride = 1;
    for i in (0..input.len()).rev() {
        if input[i] != 1 {
            strides[i + offset] = stride;
        }
        stride *= input[i];
    }
    strides
}

/// Calls `f(out_flat, in_flat)` for every element of `target`.
pub(crate) fn for_each_broadcast(
    target: &[usize],
    strides: &[usize],
    mut f: impl FnMut(usize, usize),
) {
    let total = numel(target);
    if target.is_empty() {
        f(0, 0);
        return;
    }
    let rank = target.len();
    let mut index = vec![0usize; rank];
    let mut src = 0usize;
    for out in 0..total {
        f(out, src);
        // odometer increment
        let mut d = rank;
        while d > 0 {
            d -= 1;
            index[d] += 1;
            src += strides[d];
            if index[d] < target[d] {
                break;
            }
            src -= strides[d] * index[d];
            index[d] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_shape_rules() {
        assert_eq!(broadcast_shapes(&[1, 4, 4], &[9, 4, 4]), Some(vec![9, 4, 4]));
        assert_eq!(broadcast_shapes(&[], &[3, 2]), Some(vec![3, 2]));
        assert_eq!(broadcast_shapes(&[3, 1], &[1, 5]), Some(vec![3, 5]));
        assert_eq!(broadcast_shapes(&[3], &[4]), None);
    }

    #[test]
    fn broadcast_iteration_maps_columns() {
        let target = [2, 3];
        let strides = broadcast_strides(&[3], &target);
        let mut seen = Vec::new();
        for_each_broadcast(&target, &strides, |o, i| seen.push((o, i)));
        assert_eq!(seen, vec![(0, 0), (1, 1), (2, 2), (3, 0), (4, 1), (5, 2)]);
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
        assert_eq!(Tensor::new(vec![], vec![4.0]).unwrap().item(), 4.0);
    }
}
