//! Losses, optimizer and training loops for the destination network alone,
//! the planner alone, or the whole pipeline jointly.

mod infer;
mod pipeline;
mod run;

pub use infer::{evaluate_predictors, predict, Prediction, PredictorKind};
pub use pipeline::{
    FilterInit, ModelBundle, ModelConfig, Pipeline, PipelineNodes, PlannerKind, PlannerNodes, BACKWARD_PREFIX,
    DEST_INPUT, FEATURES_INPUT, FILTER_PREFIX, FILTER_WEIGHTS, MASK_INPUT, MOVE_LOGIT, START_INPUT, TARGETS_INPUT,
};
pub use run::{train, train_destination, EPOCH_FILE_PREFIX, REPORT_FILE};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndgraph::{Gradients, Graph, NodeId, ParamStore};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mixture::NllMode;
use crate::planner::PredictionStack;

/// Added to cell probabilities before taking logs in the prediction loss.
pub const PRED_LOG_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Destination network only, destination loss only.
    Dest,
    /// Planner parameters only; the destination network is frozen.
    Planner,
    /// Everything, compound loss.
    Joint,
}

impl FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dest" => Ok(Self::Dest),
            "planner" => Ok(Self::Planner),
            "joint" => Ok(Self::Joint),
            _ => Err(invalid(format!("training mode must be dest, planner or joint, got `{s}`"))),
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Dest => "dest",
            Self::Planner => "planner",
            Self::Joint => "joint",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub dest: f64,
    pub pred: f64,
    pub reg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            dest: 1.0,
            pred: 1.0,
            reg: 1e-3,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if ![self.dest, self.pred, self.reg].iter().all(|w| *w >= 0.0 && w.is_finite()) {
            return Err(invalid(format!("loss weights must be finite and nonnegative, got {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub w_dest: f64,
    pub w_pred: f64,
    pub w_reg: f64,
    /// Probability of dropping each mixing coefficient.
    pub dropout: f64,
    pub nll_mode: NllMode,
    pub seed: u64,
    /// Global gradient-norm cap per batch; 0 disables it.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        Self {
            mode: TrainMode::Joint,
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 10,
            w_dest: w.dest,
            w_pred: w.pred,
            w_reg: w.reg,
            dropout: 0.0,
            nll_mode: NllMode::Mean,
            seed: 0,
            grad_clip: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            dest: self.w_dest,
            pred: self.w_pred,
            reg: self.w_reg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights().validate()?;
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning rate must be finite and nonnegative, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid(format!("dropout rate must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(invalid("gradient clip must be nonnegative"));
        }
        Ok(())
    }
}

pub fn compound_loss(dest_nll: f64, pred_nll: f64, reg: f64, w: &LossWeights) -> f64 {
    w.dest * dest_nll + w.pred * pred_nll + w.reg * reg
}

pub fn compound_loss_node(g: &mut Graph, dest_nll: NodeId, pred_nll: NodeId, reg: NodeId, w: &LossWeights) -> Result<NodeId> {
    let a = g.scale(dest_nll, w.dest)?;
    let b = g.scale(pred_nll, w.pred)?;
    let c = g.scale(reg, w.reg)?;
    Ok(g.add_all(&[a, b, c])?)
}

/// `−Σ_t log(stack_t at the cell of gt_t)` with the probability guarded by
/// [`PRED_LOG_EPS`]. Positions are in the stack's grid coordinates.
pub fn prediction_nll(stack: &PredictionStack, gt: &[[f64; 2]]) -> Result<f64> {
    if stack.len() != gt.len() {
        return Err(invalid(format!("{} prediction steps but {} ground-truth positions", stack.len(), gt.len())));
    }
    let mut loss = 0.0;
    for (t, (grid, p)) in stack.grids.iter().zip(gt).enumerate() {
        let (i, j) = grid.spec.cell_of(*p).ok_or(Error::OutsideGrid { step: t + 1 })?;
        loss -= (grid.get(i, j) + PRED_LOG_EPS).ln();
    }
    Ok(loss)
}

/// Adaptive moment estimation with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: i32,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.steps
    }

    /// Updates every parameter that has a gradient and passes `trainable`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients, trainable: impl Fn(&str) -> bool) -> Result<()> {
        self.steps += 1;
        let c1 = 1.0 - self.beta1.powi(self.steps);
        let c2 = 1.0 - self.beta2.powi(self.steps);
        for (name, g) in &grads.params {
            if !trainable(name) {
                continue;
            }
            let p = params.get_mut(name).ok_or_else(|| invalid(format!("gradient for unknown parameter {name}")))?;
            let n = p.numel();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            for (k, (x, gk)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                *x -= self.learning_rate * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Scales all gradients down so their global norm is at most `limit`.
pub fn clip_gradients(grads: &mut Gradients, limit: f64) -> f64 {
    let norm = grads.params.values().flat_map(|t| t.data()).map(|v| v * v).sum::<f64>().sqrt();
    if limit > 0.0 && norm > limit {
        let s = limit / norm;
        for t in grads.params.values_mut() {
            for v in t.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub dest_nll: f64,
    pub pred_nll: f64,
    pub reg: f64,
    pub total: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    /// Equality of every column except wall time.
    pub fn same_losses(&self, other: &TrainReport) -> bool {
        self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.dest_nll.to_bits() == b.dest_nll.to_bits()
                    && a.pred_nll.to_bits() == b.pred_nll.to_bits()
                    && a.reg.to_bits() == b.reg.to_bits()
                    && a.total.to_bits() == b.total.to_bits()
            })
    }

    /// Header `epoch,dest_nll,pred_nll,reg,total,seconds`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| invalid(e.to_string()))?;
        if self.epochs.is_empty() {
            w.write_record(["epoch", "dest_nll", "pred_nll", "reg", "total", "seconds"])
                .map_err(|e| invalid(e.to_string()))?;
        }
        for r in &self.epochs {
            w.serialize(r).map_err(|e| invalid(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| invalid(e.to_string()))?;
        let mut epochs = Vec::new();
        for (k, row) in r.deserialize().enumerate() {
            epochs.push(row.map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: k + 2,
                message: e.to_string(),
            })?);
        }
        Ok(Self { epochs })
    }
}
