//! Central finite-difference check of analytic gradients.

use std::collections::BTreeMap;

use crate::error::{GraphError, Result};
use crate::exec::Inputs;
use crate::graph::{Graph, NodeId};
use crate::params::ParamStore;

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-6;

/// Gradient magnitudes below `REL_FLOOR · max(1, |loss|)` are compared
/// against that floor instead of against themselves, since central
/// differences carry roundoff of order ε·|loss| / step.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    pub rel_floor: f64,
    /// Check at most this many entries per parameter, evenly strided.
    pub max_entries_per_param: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: FD_STEP,
            rel_floor: REL_FLOOR,
            max_entries_per_param: None,
        }
    }
}

/// Per-parameter maximum relative error between analytic and numeric gradients.
#[derive(Clone, Debug, Default)]
pub struct GradientReport {
    pub max_rel_error: BTreeMap<String, f64>,
    pub entries_checked: usize,
}

impl GradientReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_error.values().copied().fold(0.0, f64::max)
    }

    pub fn worst_param(&self) -> Option<(&str, f64)> {
        self.max_rel_error
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, v)| (k.as_str(), *v))
    }
}

pub fn check_gradients(
    graph: &Graph,
    params: &ParamStore,
    inputs: &Inputs,
    loss: NodeId,
    opts: &GradCheckOptions,
) -> Result<GradientReport> {
    let values = graph.forward(params, inputs)?;
    let base = values.scalar(loss);
    let grads = graph.backward(&values, loss)?;
    let floor = opts.rel_floor * base.abs().max(1.0);

    let mut report = GradientReport::default();
    let mut probe = params.clone();
    for (name, analytic) in &grads.params {
        let n = analytic.numel();
        let stride = match opts.max_entries_per_param {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };
        let mut worst = 0.0f64;
        for i in (0..n).step_by(stride) {
            let orig = params.get(name).ok_or_else(|| GraphError::MissingParam(name.clone()))?.data()[i];
            probe.get_mut(name).unwrap().data_mut()[i] = orig + opts.step;
            let up = graph.forward(&probe, inputs)?.scalar(loss);
            probe.get_mut(name).unwrap().data_mut()[i] = orig - opts.step;
            let down = graph.forward(&probe, inputs)?.scalar(loss);
            probe.get_mut(name).unwrap().data_mut()[i] = orig;

            let numeric = (up - down) / (2.0 * opts.step);
            let a = analytic.data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
            report.entries_checked += 1;
        }
        report.max_rel_error.insert(name.clone(), worst);
    }
    Ok(report)
}
