//! Grid geometry, environment feature maps and probability state grids.
//!
//! Grids are stored row-major with `y` (rows, `j`) outermost and `x`
//! (columns, `i`) innermost, matching the `[C, H, W]` tensor layout used by
//! the planners.

mod filters;
mod format;

pub use filters::{
    box_smooth, filter_kernels_node, filters_from_weights, flip_filters, frobenius_reg, frobenius_reg_node,
    init_filter_weights, propagate, propagate_node, TransitionFilters, MOVES,
};
pub use format::{read_grid_file, write_grid_file, GridFile, GridFileKind, GRID_MAGIC};

use ndgraph::Tensor;

use crate::error::{invalid, Result};

/// Feature channel names in their canonical order.
pub const FEATURE_CHANNELS: [&str; 4] = ["obstacles", "road", "sidewalk", "topview"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Meters per cell edge.
    pub cell_size: f64,
    /// World coordinates of the center of cell (0, 0).
    pub origin: [f64; 2],
}

impl GridSpec {
    pub fn new(width: usize, height: usize, cell_size: f64, origin: [f64; 2]) -> Result<Self> {
        if width < 3 || height < 3 {
            return Err(invalid(format!("grid must be at least 3x3, got {width}x{height}")));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(invalid(format!("cell size must be positive, got {cell_size}")));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(invalid("grid origin must be finite"));
        }
        Ok(Self {
            width,
            height,
            cell_size,
            origin,
        })
    }

    /// Grid whose center cell `(width / 2, height / 2)` is centered on `center`.
    pub fn centered_on(width: usize, height: usize, cell_size: f64, center: [f64; 2]) -> Result<Self> {
        let origin = [
            center[0] - (width / 2) as f64 * cell_size,
            center[1] - (height / 2) as f64 * cell_size,
        ];
        Self::new(width, height, cell_size, origin)
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    pub fn center_cell(&self) -> (usize, usize) {
        (self.width / 2, self.height / 2)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.cell_size,
            self.origin[1] + j as f64 * self.cell_size,
        ]
    }

    /// Cell containing a world point, if inside the grid.
    pub fn cell_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let fi = ((p[0] - self.origin[0]) / self.cell_size).round();
        let fj = ((p[1] - self.origin[1]) / self.cell_size).round();
        if fi < 0.0 || fj < 0.0 || fi >= self.width as f64 || fj >= self.height as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    /// Cell-center x and y coordinates as `[1, H, W]` tensors.
    pub fn mesh(&self) -> (Tensor, Tensor) {
        let (w, h) = (self.width, self.height);
        let mut xs = Vec::with_capacity(w * h);
        let mut ys = Vec::with_capacity(w * h);
        for j in 0..h {
            for i in 0..w {
                let c = self.cell_center(i, j);
                xs.push(c[0]);
                ys.push(c[1]);
            }
        }
        (
            Tensor::new(vec![1, h, w], xs).expect("mesh shape"),
            Tensor::new(vec![1, h, w], ys).expect("mesh shape"),
        )
    }

    pub fn same_shape(&self, other: &GridSpec) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Named environment channels over a grid, values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub spec: GridSpec,
    names: Vec<String>,
    channels: Vec<Vec<f64>>,
}

impl FeatureMap {
    pub fn new(spec: GridSpec, names: Vec<String>, channels: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != channels.len() {
            return Err(invalid("feature map needs one name per channel"));
        }
        for (name, ch) in names.iter().zip(&channels) {
            if ch.len() != spec.cells() {
                return Err(invalid(format!(
                    "channel `{name}` has {} values for {} cells",
                    ch.len(),
                    spec.cells()
                )));
            }
            if !ch.iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(invalid(format!("channel `{name}` has values outside [0, 1]")));
            }
        }
        for (k, name) in names.iter().enumerate() {
            if names[..k].contains(name) {
                return Err(invalid(format!("duplicate channel `{name}`")));
            }
        }
        Ok(Self {
            spec,
            names,
            channels,
        })
    }

    /// All-zero map with the canonical channels.
    pub fn empty(spec: GridSpec) -> Self {
        Self {
            spec,
            names: FEATURE_CHANNELS.iter().map(|s| s.to_string()).collect(),
            channels: vec![vec![0.0; spec.cells()]; FEATURE_CHANNELS.len()],
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn num_channels(&self) -> usize {
        self.names.len()
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.channels[k].as_slice())
    }

    pub fn channel_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.channels[k].as_mut_slice())
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn is_obstacle(&self, i: usize, j: usize) -> bool {
        self.channel("obstacles")
            .map(|c| c[self.spec.index(i, j)] > 0.5)
            .unwrap_or(false)
    }

    /// Channels stacked as a `[C, H, W]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.channels.iter().flatten().copied().collect();
        Tensor::new(
            vec![self.channels.len(), self.spec.height, self.spec.width],
            data,
        )
        .expect("feature tensor shape")
    }

    /// Window of another grid geometry cut out of this map. Cells outside
    /// this map read as obstacle (1) and 0 on every other channel.
    pub fn crop(&self, window: GridSpec) -> FeatureMap {
        let mut channels = vec![vec![0.0; window.cells()]; self.names.len()];
        let outside: Vec<f64> = self
            .names
            .iter()
            .map(|n| if n == "obstacles" { 1.0 } else { 0.0 })
            .collect();
        for j in 0..window.height {
            for i in 0..window.width {
                let at = window.index(i, j);
                match self.spec.cell_of(window.cell_center(i, j)) {
                    Some((si, sj)) => {
                        let src = self.spec.index(si, sj);
                        for (c, ch) in channels.iter_mut().enumerate() {
                            ch[at] = self.channels[c][src];
                        }
                    }
                    None => {
                        for (c, ch) in channels.iter_mut().enumerate() {
                            ch[at] = outside[c];
                        }
                    }
                }
            }
        }
        FeatureMap {
            spec: window,
            names: self.names.clone(),
            channels,
        }
    }

    pub fn write(&self, path: impl AsRef<std::path::Path>, kind: GridFileKind) -> Result<()> {
        write_grid_file(
            path,
            &GridFile {
                spec: self.spec,
                names: self.names.clone(),
                channels: self.channels.clone(),
            },
            kind,
        )
    }

    pub fn read(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = read_grid_file(path)?;
        Self::new(f.spec, f.names, f.channels)
    }
}

/// Nonnegative per-cell mass over a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct StateGrid {
    pub spec: GridSpec,
    values: Vec<f64>,
}

impl StateGrid {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.cells() {
            return Err(invalid(format!(
                "state grid has {} values for {} cells",
                values.len(),
                spec.cells()
            )));
        }
        if !values.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            return Err(invalid("state grid entries must be finite and nonnegative"));
        }
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            values: vec![0.0; spec.cells()],
        }
    }

    pub fn delta(spec: GridSpec, i: usize, j: usize) -> Self {
        let mut g = Self::zeros(spec);
        g.values[spec.index(i, j)] = 1.0;
        g
    }

    pub fn uniform(spec: GridSpec) -> Self {
        Self {
            spec,
            values: vec![1.0 / spec.cells() as f64; spec.cells()],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.index(i, j)]
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.mass() - 1.0).abs() <= tol
    }

    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if m <= 0.0 {
            return Err(invalid("cannot normalize a grid with zero mass"));
        }
        Ok(Self {
            spec: self.spec,
            values: self.values.iter().map(|v| v / m).collect(),
        })
    }

    /// Cell with the largest mass (first in row-major order on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        (best % self.spec.width, best / self.spec.width)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![1, self.spec.height, self.spec.width], self.values.clone())
            .expect("state tensor shape")
    }

    pub fn from_tensor(spec: GridSpec, t: &Tensor) -> Result<Self> {
        Self::new(spec, t.data().to_vec())
    }
}
