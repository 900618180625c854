//! Prediction as planning: value iteration with a softmax policy, and the
//! forward–backward bridge between a start and a destination distribution.
//!
//! Every operation exists twice: as a graph builder used in training, and as
//! a plain-loop evaluator used at inference and as a cross-check.

use std::fs;
use std::path::Path;

use ndgraph::{Graph, NodeId, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gridworld::{propagate, propagate_node, write_grid_file, GridFile, GridFileKind, GridSpec, StateGrid, TransitionFilters};

/// Sweep-to-sweep change below which value iteration counts as converged.
pub const CONVERGENCE_TOL: f64 = 1e-6;

pub const DEFAULT_STEP_SECONDS: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValueIterationConfig {
    pub gamma: f64,
    pub iterations: usize,
    pub temperature: f64,
}

impl Default for ValueIterationConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            iterations: 64,
            temperature: 0.1,
        }
    }
}

impl ValueIterationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(invalid(format!("discount must lie in [0, 1], got {}", self.gamma)));
        }
        if self.iterations == 0 {
            return Err(invalid("value iteration needs at least one sweep"));
        }
        if !(self.temperature > 0.0) {
            return Err(invalid(format!("policy temperature must be positive, got {}", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueMap {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    /// Per-action values `[M, H, W]`.
    pub q: Tensor,
    /// First sweep whose largest change fell below [`CONVERGENCE_TOL`].
    pub converged_at: Option<usize>,
}

/// Per-cell action distribution `[M, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyMap {
    pub spec: GridSpec,
    pub weights: Tensor,
}

impl PolicyMap {
    pub fn actions(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn weight(&self, action: usize, i: usize, j: usize) -> f64 {
        self.weights.data()[action * self.spec.cells() + self.spec.index(i, j)]
    }

    /// Most probable action per cell, row-major.
    pub fn dominant_actions(&self) -> Vec<usize> {
        dominant_actions(&self.weights)
    }
}

pub(crate) fn dominant_actions(weights: &Tensor) -> Vec<usize> {
    let m = weights.shape()[0];
    let n = weights.numel() / m;
    (0..n)
        .map(|c| {
            let mut best = 0;
            for a in 1..m {
                if weights.data()[a * n + c] > weights.data()[best * n + c] {
                    best = a;
                }
            }
            best
        })
        .collect()
}

/// One state grid per predicted step.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionStack {
    pub grids: Vec<StateGrid>,
}

impl PredictionStack {
    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    /// Writes `step_XX.map` files and a `manifest.csv` with their times.
    pub fn export(&self, dir: impl AsRef<Path>, step_seconds: f64, kind: GridFileKind) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut manifest = String::from("step,time_s,file\n");
        for (t, grid) in self.grids.iter().enumerate() {
            let name = format!("step_{:02}.map", t + 1);
            write_grid_file(
                dir.join(&name),
                &GridFile {
                    spec: grid.spec,
                    names: vec!["probability".into()],
                    channels: vec![grid.values().to_vec()],
                },
                kind,
            )?;
            manifest.push_str(&format!("{},{},{}\n", t + 1, (t + 1) as f64 * step_seconds, name));
        }
        fs::write(dir.join("manifest.csv"), manifest)?;
        Ok(())
    }
}

fn check_maps(name: &str, t: &Tensor, m: usize, spec: &GridSpec) -> Result<()> {
    if t.shape() != [m, spec.height, spec.width] {
        return Err(invalid(format!(
            "{name} must be [{m}, {}, {}], got {:?}",
            spec.height,
            spec.width,
            t.shape()
        )));
    }
    Ok(())
}

/// Q_a(s) = Σ_d f_a[d]·V(s + d − c): the expected next value under action a.
fn expected_next(v: &[f64], kernel: &[f64], k: usize, spec: &GridSpec) -> Vec<f64> {
    let (w, h) = (spec.width as i64, spec.height as i64);
    let half = (k / 2) as i64;
    let mut out = vec![0.0; v.len()];
    for j in 0..h {
        for i in 0..w {
            let mut s = 0.0;
            for dy in 0..k as i64 {
                let y = j + dy - half;
                if y < 0 || y >= h {
                    continue;
                }
                for dx in 0..k as i64 {
                    let x = i + dx - half;
                    if x < 0 || x >= w {
                        continue;
                    }
                    s += kernel[(dy * k as i64 + dx) as usize] * v[(y * w + x) as usize];
                }
            }
            out[(j * w + i) as usize] = s;
        }
    }
    out
}

/// K sweeps of Q_a = γ·E_a[V] + R_a, V = max_a Q_a, starting from V = 0.
pub fn value_iteration(reward: &Tensor, filters: &TransitionFilters, spec: GridSpec, cfg: &ValueIterationConfig) -> Result<ValueMap> {
    cfg.validate()?;
    let m = filters.actions();
    check_maps("reward", reward, m, &spec)?;
    if !reward.all_finite() {
        return Err(invalid("reward maps must be finite"));
    }
    let n = spec.cells();
    let mut v = vec![0.0; n];
    let mut q = vec![0.0; m * n];
    let mut converged_at = None;
    for sweep in 1..=cfg.iterations {
        for a in 0..m {
            let e = expected_next(&v, filters.kernel(a), filters.size(), &spec);
            for c in 0..n {
                q[a * n + c] = cfg.gamma * e[c] + reward.data()[a * n + c];
            }
        }
        let mut change: f64 = 0.0;
        for c in 0..n {
            let best = (0..m).map(|a| q[a * n + c]).fold(f64::NEG_INFINITY, f64::max);
            change = change.max((best - v[c]).abs());
            v[c] = best;
        }
        if converged_at.is_none() && change < CONVERGENCE_TOL {
            converged_at = Some(sweep);
        }
    }
    Ok(ValueMap {
        spec,
        values: v,
        q: Tensor::new(vec![m, spec.height, spec.width], q)?,
        converged_at,
    })
}

/// Per-cell softmax of Q/τ over actions.
pub fn policy_from_values(q: &Tensor, spec: GridSpec, temperature: f64) -> Result<PolicyMap> {
    if !(temperature > 0.0) {
        return Err(invalid(format!("policy temperature must be positive, got {temperature}")));
    }
    let m = q.shape().first().copied().unwrap_or(0);
    check_maps("Q", q, m, &spec)?;
    if m == 0 || !q.all_finite() {
        return Err(invalid("Q maps must be finite and nonempty"));
    }
    let n = spec.cells();
    let mut w = vec![0.0; m * n];
    for c in 0..n {
        let mx = (0..m).map(|a| q.data()[a * n + c]).fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for a in 0..m {
            let e = ((q.data()[a * n + c] - mx) / temperature).exp();
            w[a * n + c] = e;
            s += e;
        }
        for a in 0..m {
            w[a * n + c] /= s;
        }
    }
    Ok(PolicyMap {
        spec,
        weights: Tensor::new(q.shape().to_vec(), w)?,
    })
}

fn renormalized(grid: StateGrid, step: usize) -> Result<StateGrid> {
    grid.normalized().map_err(|_| Error::InfeasibleHorizon { step })
}

/// T policy-weighted propagation steps from `start`, renormalized per step.
pub fn mdp_predict(start: &StateGrid, policy: &PolicyMap, filters: &TransitionFilters, steps: usize) -> Result<PredictionStack> {
    if steps == 0 {
        return Err(invalid("prediction horizon must be at least one step"));
    }
    let mut grids = Vec::with_capacity(steps);
    let mut s = start.clone();
    for t in 1..=steps {
        s = renormalized(propagate(&s, filters, &policy.weights)?, t)?;
        grids.push(s.clone());
    }
    Ok(PredictionStack { grids })
}

/// β(s) = Σ_a w_a(s)·Σ_d f_a[d]·β'(s + d − c), the probability of reaching
/// the destination from s one step earlier.
fn pull_back(beta: &[f64], filters: &TransitionFilters, weights: &Tensor, spec: &GridSpec) -> Vec<f64> {
    let n = spec.cells();
    let mut out = vec![0.0; n];
    for a in 0..filters.actions() {
        let e = expected_next(beta, filters.kernel(a), filters.size(), spec);
        for c in 0..n {
            out[c] += weights.data()[a * n + c] * e[c];
        }
    }
    out
}

/// Per-step bridge posterior between `start` at step 0 and `dest` at step T.
///
/// `backward_probs` defaults to `action_probs`.
pub fn fwdbwd_predict(
    start: &StateGrid,
    dest: &StateGrid,
    filters: &TransitionFilters,
    action_probs: &Tensor,
    backward_probs: Option<&Tensor>,
    steps: usize,
) -> Result<PredictionStack> {
    if steps == 0 {
        return Err(invalid("prediction horizon must be at least one step"));
    }
    let spec = start.spec;
    if !spec.same_shape(&dest.spec) {
        return Err(invalid("start and destination grids differ in shape"));
    }
    let m = filters.actions();
    check_maps("action probabilities", action_probs, m, &spec)?;
    let bwd = backward_probs.unwrap_or(action_probs);
    check_maps("backward action probabilities", bwd, m, &spec)?;

    let mut fwd = Vec::with_capacity(steps);
    let mut f = start.clone();
    for _ in 0..steps {
        f = propagate(&f, filters, action_probs)?;
        fwd.push(f.clone());
    }
    let mut beta = vec![dest.values().to_vec()];
    for _ in 1..steps {
        let next = pull_back(beta.last().expect("seeded"), filters, bwd, &spec);
        beta.push(next);
    }
    beta.reverse();
    let grids = fwd
        .iter()
        .zip(&beta)
        .enumerate()
        .map(|(t, (f, b))| {
            let joint: Vec<f64> = f.values().iter().zip(b).map(|(x, y)| x * y).collect();
            renormalized(StateGrid::new(spec, joint)?, t + 1)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionStack { grids })
}

/// Graph nodes of value iteration: final `V` `[1, H, W]` and `Q` `[M, H, W]`.
#[derive(Clone, Debug)]
pub struct ValueNodes {
    pub v: NodeId,
    pub q: NodeId,
    pub sweeps: Vec<NodeId>,
}

pub fn value_iteration_node(g: &mut Graph, reward: NodeId, kernels: NodeId, cfg: &ValueIterationConfig) -> Result<ValueNodes> {
    cfg.validate()?;
    let rs = g.shape(reward).to_vec();
    let ks = g.shape(kernels).to_vec();
    if rs.len() != 3 || ks.len() != 3 || rs[0] != ks[0] {
        return Err(invalid(format!("reward {rs:?} and kernels {ks:?} disagree")));
    }
    let kc = g.reshape(kernels, &[ks[0], 1, ks[1], ks[2]])?;
    let mut v = g.constant(Tensor::zeros(&[1, rs[1], rs[2]]));
    let mut q = reward;
    let mut sweeps = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let e = g.conv2d(v, kc)?;
        let e = g.scale(e, cfg.gamma)?;
        q = g.add(e, reward)?;
        v = g.max_axis(q, 0)?;
        sweeps.push(v);
    }
    Ok(ValueNodes { v, q, sweeps })
}

pub fn policy_node(g: &mut Graph, q: NodeId, temperature: f64) -> Result<NodeId> {
    if !(temperature > 0.0) {
        return Err(invalid(format!("policy temperature must be positive, got {temperature}")));
    }
    let s = g.scale(q, 1.0 / temperature)?;
    Ok(g.softmax(s, 0)?)
}

fn normalize_node(g: &mut Graph, x: NodeId) -> Result<NodeId> {
    let total = g.sum(x)?;
    Ok(g.div(x, total)?)
}

/// Graph form of [`mdp_predict`]; returns one `[1, H, W]` node per step.
pub fn mdp_predict_node(g: &mut Graph, start: NodeId, policy: NodeId, kernels: NodeId, steps: usize) -> Result<Vec<NodeId>> {
    if steps == 0 {
        return Err(invalid("prediction horizon must be at least one step"));
    }
    let mut s = start;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let next = propagate_node(g, s, policy, kernels)?;
        s = normalize_node(g, next)?;
        out.push(s);
    }
    Ok(out)
}

/// Graph form of [`fwdbwd_predict`].
pub fn fwdbwd_predict_node(
    g: &mut Graph,
    start: NodeId,
    dest: NodeId,
    kernels: NodeId,
    action_probs: NodeId,
    backward_probs: Option<NodeId>,
    steps: usize,
) -> Result<Vec<NodeId>> {
    if steps == 0 {
        return Err(invalid("prediction horizon must be at least one step"));
    }
    let ks = g.shape(kernels).to_vec();
    let kc = g.reshape(kernels, &[ks[0], 1, ks[1], ks[2]])?;
    let bwd = backward_probs.unwrap_or(action_probs);
    let mut f = start;
    let mut fwd = Vec::with_capacity(steps);
    for _ in 0..steps {
        f = propagate_node(g, f, action_probs, kernels)?;
        fwd.push(f);
    }
    let mut beta = vec![dest];
    for _ in 1..steps {
        let last = *beta.last().expect("seeded");
        let e = g.conv2d(last, kc)?;
        let weighted = g.mul(e, bwd)?;
        beta.push(g.sum_axis(weighted, 0)?);
    }
    beta.reverse();
    fwd.iter()
        .zip(&beta)
        .map(|(f, b)| {
            let joint = g.mul(*f, *b)?;
            normalize_node(g, joint)
        })
        .collect()
}
