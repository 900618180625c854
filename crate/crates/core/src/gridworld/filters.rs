//! Action-indexed transition kernels and grid propagation.

use ndgraph::{Graph, NodeId, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;

use super::StateGrid;
use crate::error::{invalid, Result};

/// Tolerance on per-cell action weight sums in [`propagate`].
const ACTION_SUM_TOL: f64 = 1e-9;

/// Cell offsets `[dx, dy]` of the default action set: stay, then the eight
/// neighbors counter-clockwise from +x.
pub const MOVES: [[i64; 2]; 9] = [
    [0, 0],
    [1, 0],
    [1, 1],
    [0, 1],
    [-1, 1],
    [-1, 0],
    [-1, -1],
    [0, -1],
    [1, -1],
];

/// M probability kernels of size k×k, each the softmax of its raw weights.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionFilters {
    weights: Tensor,
    kernels: Tensor,
}

impl TransitionFilters {
    pub fn actions(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn size(&self) -> usize {
        self.kernels.shape()[1]
    }

    /// Raw weights `[M, k, k]`.
    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    /// Probability kernels `[M, k, k]`.
    pub fn kernels(&self) -> &Tensor {
        &self.kernels
    }

    pub fn kernel(&self, action: usize) -> &[f64] {
        let kk = self.size() * self.size();
        &self.kernels.data()[action * kk..(action + 1) * kk]
    }

    /// Expected displacement (dx, dy) in cells under one action.
    pub fn mean_offset(&self, action: usize) -> [f64; 2] {
        let k = self.size();
        let c = (k / 2) as f64;
        let mut m = [0.0; 2];
        for (t, p) in self.kernel(action).iter().enumerate() {
            m[0] += p * ((t % k) as f64 - c);
            m[1] += p * ((t / k) as f64 - c);
        }
        m
    }

    /// Deterministic one-hot kernels of size `k`, one per entry of [`MOVES`].
    pub fn shifts(k: usize) -> Result<Self> {
        check_kernel_shape(&[MOVES.len(), k, k])?;
        if k < 3 {
            return Err(invalid("shift kernels need k >= 3"));
        }
        let c = (k / 2) as i64;
        let mut data = vec![0.0; MOVES.len() * k * k];
        for (a, m) in MOVES.iter().enumerate() {
            data[a * k * k + ((c + m[1]) * k as i64 + c + m[0]) as usize] = 1.0;
        }
        Self::from_kernels(Tensor::new(vec![MOVES.len(), k, k], data)?)
    }

    /// Builds filters directly from probability kernels (each must be
    /// positive-or-zero and sum to 1). Raw weights are set to log-kernels.
    pub fn from_kernels(kernels: Tensor) -> Result<Self> {
        check_kernel_shape(kernels.shape())?;
        let kk = kernels.shape()[1] * kernels.shape()[2];
        for (a, k) in kernels.data().chunks(kk).enumerate() {
            if k.iter().any(|v| *v < 0.0) || (k.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(invalid(format!("kernel {a} is not a probability distribution")));
            }
        }
        let weights = kernels.map(|v| v.max(ndgraph::LOG_FLOOR).ln());
        Ok(Self { weights, kernels })
    }
}

fn check_kernel_shape(shape: &[usize]) -> Result<()> {
    if shape.len() != 3 || shape[0] == 0 || shape[1] != shape[2] {
        return Err(invalid(format!("filter weights must be [M, k, k], got {shape:?}")));
    }
    if shape[1].is_multiple_of(2) {
        return Err(invalid(format!("filter size must be odd, got {}", shape[1])));
    }
    Ok(())
}

/// Per-action softmax over all k² weights.
pub fn filters_from_weights(weights: Tensor) -> Result<TransitionFilters> {
    check_kernel_shape(weights.shape())?;
    let kk = weights.shape()[1] * weights.shape()[2];
    let mut kernels = weights.clone();
    for chunk in kernels.data_mut().chunks_mut(kk) {
        let m = chunk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in chunk.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in chunk.iter_mut() {
            *v /= s;
        }
    }
    Ok(TransitionFilters { weights, kernels })
}

/// 3×3 mean filter with zero padding, applied to one k×k field.
pub fn box_smooth(field: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * k];
    for y in 0..k {
        for x in 0..k {
            let mut s = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (yy, xx) = (y as i64 + dy, x as i64 + dx);
                    if yy >= 0 && xx >= 0 && (yy as usize) < k && (xx as usize) < k {
                        s += field[yy as usize * k + xx as usize];
                    }
                }
            }
            out[y * k + x] = s / 9.0;
        }
    }
    out
}

/// Standard-normal weights smoothed with a 3×3 box filter, `[M, k, k]`.
pub fn init_filter_weights(rng: &mut impl Rng, actions: usize, k: usize) -> Result<Tensor> {
    check_kernel_shape(&[actions, k, k])?;
    let mut data = Vec::with_capacity(actions * k * k);
    for _ in 0..actions {
        let raw: Vec<f64> = (0..k * k).map(|_| rng.sample(StandardNormal)).collect();
        data.extend(box_smooth(&raw, k));
    }
    Ok(Tensor::new(vec![actions, k, k], data)?)
}

/// Σ over unordered action pairs of the Frobenius inner product ⟨f_a, f_b⟩.
pub fn frobenius_reg(filters: &TransitionFilters) -> f64 {
    let m = filters.actions();
    let mut total = 0.0;
    for a in 0..m {
        for b in a + 1..m {
            total += filters
                .kernel(a)
                .iter()
                .zip(filters.kernel(b))
                .map(|(x, y)| x * y)
                .sum::<f64>();
        }
    }
    total
}

/// Graph form of [`frobenius_reg`] on kernels `[M, k, k]`, via
/// ½(‖Σ_a f_a‖² − Σ_a ‖f_a‖²).
pub fn frobenius_reg_node(g: &mut Graph, kernels: NodeId) -> Result<NodeId> {
    let shape = g.shape(kernels).to_vec();
    if shape[0] < 2 {
        return Ok(g.scalar(0.0));
    }
    let flat = g.reshape(kernels, &[shape[0], shape[1] * shape[2]])?;
    let total = g.sum_axis(flat, 0)?;
    let total_sq = g.mul(total, total)?;
    let cross = g.sum(total_sq)?;
    let self_sq = g.mul(flat, flat)?;
    let diag = g.sum(self_sq)?;
    let diff = g.sub(cross, diag)?;
    Ok(g.scale(diff, 0.5)?)
}

/// Softmax kernels `[M, k, k]` from a raw weight node of the same shape.
pub fn filter_kernels_node(g: &mut Graph, weights: NodeId) -> Result<NodeId> {
    let shape = g.shape(weights).to_vec();
    check_kernel_shape(&shape)?;
    let flat = g.reshape(weights, &[shape[0], shape[1] * shape[2]])?;
    let soft = g.softmax(flat, 1)?;
    Ok(g.reshape(soft, &shape)?)
}

/// Each kernel rotated by 180°.
pub fn flip_filters(filters: &TransitionFilters) -> TransitionFilters {
    let flip = |t: &Tensor| {
        let (m, k) = (t.shape()[0], t.shape()[1]);
        let mut data = vec![0.0; t.numel()];
        for a in 0..m {
            for y in 0..k {
                for x in 0..k {
                    data[(a * k + (k - 1 - y)) * k + (k - 1 - x)] = t.data()[(a * k + y) * k + x];
                }
            }
        }
        Tensor::new(t.shape().to_vec(), data).expect("flip shape")
    };
    TransitionFilters {
        weights: flip(&filters.weights),
        kernels: flip(&filters.kernels),
    }
}

/// One transition step: Σ_a (state ⊙ w_a) ⊛ f_a, mass leaving the grid is lost.
///
/// `action_weights` is `[M, H, W]`, per cell nonnegative and summing to at
/// most one.
pub fn propagate(state: &StateGrid, filters: &TransitionFilters, action_weights: &Tensor) -> Result<StateGrid> {
    let spec = state.spec;
    let (w, h, m, k) = (spec.width, spec.height, filters.actions(), filters.size());
    if action_weights.shape() != [m, h, w] {
        return Err(invalid(format!(
            "action weights must be [{m}, {h}, {w}], got {:?}",
            action_weights.shape()
        )));
    }
    let aw = action_weights.data();
    for cell in 0..w * h {
        let mut s = 0.0;
        for a in 0..m {
            let v = aw[a * w * h + cell];
            if !(v >= 0.0) {
                return Err(invalid("action weights must be nonnegative"));
            }
            s += v;
        }
        if s > 1.0 + ACTION_SUM_TOL {
            return Err(invalid(format!("action weights at cell {cell} sum to {s} > 1")));
        }
    }
    let half = (k / 2) as i64;
    let mut out = vec![0.0; w * h];
    let src = state.values();
    for a in 0..m {
        let kernel = filters.kernel(a);
        for j in 0..h {
            for i in 0..w {
                let mass = src[j * w + i] * aw[a * w * h + j * w + i];
                if mass == 0.0 {
                    continue;
                }
                for dy in 0..k {
                    let y = j as i64 + dy as i64 - half;
                    if y < 0 || y >= h as i64 {
                        continue;
                    }
                    for dx in 0..k {
                        let x = i as i64 + dx as i64 - half;
                        if x < 0 || x >= w as i64 {
                            continue;
                        }
                        out[y as usize * w + x as usize] += mass * kernel[dy * k + dx];
                    }
                }
            }
        }
    }
    StateGrid::new(spec, out)
}

/// Graph form of [`propagate`]: state `[1, H, W]`, weights `[M, H, W]`,
/// kernels `[M, k, k]` → `[1, H, W]`.
pub fn propagate_node(g: &mut Graph, state: NodeId, weights: NodeId, kernels: NodeId) -> Result<NodeId> {
    let ks = g.shape(kernels).to_vec();
    let gated = g.mul(state, weights)?;
    let flipped = g.flip2d(kernels)?;
    let stacked = g.reshape(flipped, &[1, ks[0], ks[1], ks[2]])?;
    Ok(g.conv2d(gated, stacked)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::GridSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(n: usize) -> GridSpec {
        GridSpec::new(n, n, 1.0, [0.0, 0.0]).unwrap()
    }

    fn one_hot(k: usize, tap: usize) -> Vec<f64> {
        let mut v = vec![0.0; k * k];
        v[tap] = 1.0;
        v
    }

    #[test]
    fn equal_weights_give_uniform_kernel() {
        let f = filters_from_weights(Tensor::full(&[2, 3, 3], 0.4)).unwrap();
        for v in f.kernels().data() {
            assert!((v - 1.0 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_weight_gives_one_hot() {
        let mut w = Tensor::zeros(&[1, 3, 3]);
        w.data_mut()[5] = 50.0;
        let f = filters_from_weights(w).unwrap();
        assert!(f.kernel(0)[5] > 1.0 - 1e-15);
        assert!(f.kernel(0).iter().enumerate().all(|(i, v)| i == 5 || *v < 1e-21));
    }

    #[test]
    fn even_kernel_rejected() {
        assert!(filters_from_weights(Tensor::zeros(&[2, 4, 4])).is_err());
        assert!(init_filter_weights(&mut ChaCha8Rng::seed_from_u64(0), 9, 2).is_err());
    }

    #[test]
    fn init_is_reproducible() {
        let a = init_filter_weights(&mut ChaCha8Rng::seed_from_u64(17), 9, 3).unwrap();
        let b = init_filter_weights(&mut ChaCha8Rng::seed_from_u64(17), 9, 3).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn box_filter_keeps_interior_of_constant_field() {
        let out = box_smooth(&[2.5; 25], 5);
        for y in 1..4 {
            for x in 1..4 {
                assert!((out[y * 5 + x] - 2.5).abs() < 1e-15);
            }
        }
        assert!(out[0] < 2.5);
    }

    #[test]
    fn smoothing_reduces_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // 10⁴ samples per side: 400 actions of 5×5
        let w = init_filter_weights(&mut rng, 400, 5).unwrap();
        let raw: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            (0..400 * 25).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
        };
        assert!(var(w.data()) < var(&raw));
    }

    #[test]
    fn frobenius_examples() {
        let disjoint = TransitionFilters::from_kernels(
            Tensor::new(vec![2, 3, 3], [one_hot(3, 0), one_hot(3, 4)].concat()).unwrap(),
        )
        .unwrap();
        assert_eq!(frobenius_reg(&disjoint), 0.0);

        let uniform = filters_from_weights(Tensor::zeros(&[2, 3, 3])).unwrap();
        assert!((frobenius_reg(&uniform) - 1.0 / 9.0).abs() < 1e-15);

        let m = 5;
        let same = filters_from_weights(Tensor::zeros(&[m, 3, 3])).unwrap();
        let norm_sq: f64 = same.kernel(0).iter().map(|v| v * v).sum();
        let pairs = (m * (m - 1) / 2) as f64;
        assert!((frobenius_reg(&same) - pairs * norm_sq).abs() < 1e-14);

        let single = filters_from_weights(Tensor::zeros(&[1, 3, 3])).unwrap();
        assert_eq!(frobenius_reg(&single), 0.0);
    }

    #[test]
    fn frobenius_graph_matches_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = filters_from_weights(init_filter_weights(&mut rng, 6, 3).unwrap()).unwrap();
        let mut g = Graph::new();
        let k = g.constant(f.kernels().clone());
        let reg = frobenius_reg_node(&mut g, k).unwrap();
        let v = ndgraph::eval_constant(&g).unwrap();
        assert!((v.scalar(reg) - frobenius_reg(&f)).abs() < 1e-14);
    }

    #[test]
    fn frobenius_is_permutation_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = init_filter_weights(&mut rng, 4, 3).unwrap();
        let f = filters_from_weights(w.clone()).unwrap();
        let mut perm = Vec::new();
        for a in [2, 0, 3, 1] {
            perm.extend_from_slice(&w.data()[a * 9..(a + 1) * 9]);
        }
        let fp = filters_from_weights(Tensor::new(vec![4, 3, 3], perm).unwrap()).unwrap();
        assert!((frobenius_reg(&f) - frobenius_reg(&fp)).abs() < 1e-15);
    }

    #[test]
    fn shift_kernels_match_moves() {
        let f = TransitionFilters::shifts(3).unwrap();
        for (a, m) in MOVES.iter().enumerate() {
            assert_eq!(f.mean_offset(a), [m[0] as f64, m[1] as f64]);
        }
    }

    #[test]
    fn shift_kernel_moves_delta_right() {
        let s = spec(5);
        let f = TransitionFilters::from_kernels(Tensor::new(vec![1, 3, 3], one_hot(3, 5)).unwrap()).unwrap();
        let out = propagate(&StateGrid::delta(s, 2, 2), &f, &Tensor::full(&[1, 5, 5], 1.0)).unwrap();
        assert_eq!(out.get(3, 2), 1.0);
        assert_eq!(out.mass(), 1.0);
    }

    #[test]
    fn uniform_kernel_spreads_ninths() {
        let s = spec(5);
        let f = filters_from_weights(Tensor::zeros(&[1, 3, 3])).unwrap();
        let out = propagate(&StateGrid::delta(s, 2, 2), &f, &Tensor::full(&[1, 5, 5], 1.0)).unwrap();
        for j in 1..4 {
            for i in 1..4 {
                assert!((out.get(i, j) - 1.0 / 9.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn flipped_shift_undoes_shift() {
        let s = spec(5);
        let f = TransitionFilters::from_kernels(Tensor::new(vec![1, 3, 3], one_hot(3, 5)).unwrap()).unwrap();
        let ones = Tensor::full(&[1, 5, 5], 1.0);
        let moved = propagate(&StateGrid::delta(s, 2, 2), &f, &ones).unwrap();
        let back = propagate(&moved, &flip_filters(&f), &ones).unwrap();
        assert_eq!(back.get(2, 2), 1.0);
    }

    #[test]
    fn flip_is_an_involution_and_keeps_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = filters_from_weights(init_filter_weights(&mut rng, 3, 5).unwrap()).unwrap();
        let ff = flip_filters(&flip_filters(&f));
        assert_eq!(ff, f);
        let fl = flip_filters(&f);
        for a in 0..3 {
            assert!((fl.kernel(a).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let sym = filters_from_weights(Tensor::zeros(&[1, 3, 3])).unwrap();
        assert_eq!(flip_filters(&sym), sym);
    }

    #[test]
    fn rejects_overfull_action_weights() {
        let s = spec(4);
        let f = filters_from_weights(Tensor::zeros(&[2, 3, 3])).unwrap();
        let w = Tensor::full(&[2, 4, 4], 0.6);
        assert!(propagate(&StateGrid::uniform(s), &f, &w).is_err());
        assert!(propagate(&StateGrid::uniform(s), &f, &Tensor::full(&[3, 4, 4], 0.1)).is_err());
    }
}
