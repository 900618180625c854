//! Inference with trained bundles and the predictor comparison run.

use std::fmt;
use std::str::FromStr;

use ndgraph::Tensor;

use crate::baseline_imm::{ImmConfig, ImmState, ProcessNoise};
use crate::error::{invalid, Error, Result};
use crate::gridworld::StateGrid;
use crate::mixture::{activate, discretize, DestinationGrid, MixtureParams};
use crate::planner::PredictionStack;
use crate::scenariolab::{evaluate_gaussians, evaluate_grids, grid_mass_in_circle, EvalRow, Sample};

use super::pipeline::{ModelBundle, Pipeline, PlannerKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PredictorKind {
    Rmdn,
    /// Single-component destination network.
    Rdn,
    Mdp,
    Fwdbwd,
    Imm,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 5] = [Self::Rmdn, Self::Rdn, Self::Mdp, Self::Fwdbwd, Self::Imm];

    pub fn name(self) -> &'static str {
        match self {
            Self::Rmdn => "rmdn",
            Self::Rdn => "rdn",
            Self::Mdp => "mdp",
            Self::Fwdbwd => "fwdbwd",
            Self::Imm => "imm",
        }
    }
}

impl FromStr for PredictorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown predictor `{s}`")))
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything the pipeline produces for one sample, in the local frame.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub mixture: MixtureParams,
    pub destination: DestinationGrid,
    pub stack: PredictionStack,
    /// Policy (mdp) or action distribution (fwdbwd), `[M, H, W]`.
    pub actions: Tensor,
    /// Reward maps for mdp, equal to `actions` for fwdbwd.
    pub topology: Tensor,
    pub kernels: Tensor,
}

/// Full pipeline evaluation without dropout.
pub fn predict(bundle: &ModelBundle, sample: &Sample) -> Result<Prediction> {
    predict_with(&Pipeline::joint(&bundle.cfg)?, bundle, sample)
}

fn predict_with(p: &Pipeline, bundle: &ModelBundle, sample: &Sample) -> Result<Prediction> {
    let v = p.graph.forward(&bundle.params, &p.inputs(sample, None)?)?;
    let n = p.nodes.planner.as_ref().ok_or_else(|| invalid("pipeline has no planner"))?;
    let spec = bundle.cfg.local_spec()?;
    let stack = PredictionStack {
        grids: n
            .stack
            .iter()
            .map(|s| StateGrid::from_tensor(spec, v.get(*s)))
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(Prediction {
        mixture: activate(v.get(p.nodes.raw).data())?,
        destination: DestinationGrid::from_tensor(spec, v.get(n.joint), v.get(n.log_total).data()[0].exp())?,
        stack,
        actions: v.get(n.actions).clone(),
        topology: v.get(n.topology).clone(),
        kernels: v.get(n.kernels).clone(),
    })
}

fn mixture_with(p: &Pipeline, bundle: &ModelBundle, sample: &Sample) -> Result<MixtureParams> {
    let v = p.graph.forward(&bundle.params, &p.inputs(sample, None)?)?;
    activate(v.get(p.nodes.raw).data())
}

enum Runner<'a> {
    Destination(&'a ModelBundle, Pipeline),
    Planner(&'a ModelBundle, Pipeline),
    Imm(ImmConfig, ProcessNoise, Vec<usize>),
}

/// Rows for every sample and entry. Destination predictors are scored at
/// their model's horizon, planners at every planner step and the IMM at
/// `imm_horizons` (samples ahead). Horizons are converted to seconds with
/// `rate_hz`.
pub fn evaluate_predictors(
    samples: &[Sample],
    models: &[(PredictorKind, &ModelBundle)],
    imm: Option<(ImmConfig, ProcessNoise, Vec<usize>)>,
    rate_hz: f64,
    area: f64,
) -> Result<Vec<EvalRow>> {
    let mut runners = Vec::new();
    for (kind, m) in models {
        match kind {
            PredictorKind::Rmdn | PredictorKind::Rdn => runners.push((*kind, Runner::Destination(m, Pipeline::destination(&m.cfg)?))),
            PredictorKind::Mdp | PredictorKind::Fwdbwd => {
                let want = if *kind == PredictorKind::Mdp { PlannerKind::Mdp } else { PlannerKind::Fwdbwd };
                if m.cfg.planner != want {
                    return Err(invalid(format!("{kind} needs a model built for that planner, got {}", m.cfg.planner)));
                }
                runners.push((*kind, Runner::Planner(m, Pipeline::joint(&m.cfg)?)));
            }
            PredictorKind::Imm => return Err(invalid("the IMM takes no model")),
        }
    }
    if let Some((cfg, noise, horizons)) = imm {
        cfg.validate()?;
        runners.push((PredictorKind::Imm, Runner::Imm(cfg, noise, horizons)));
    }
    let mut rows = Vec::new();
    for s in samples {
        for (kind, r) in &runners {
            let name = kind.name();
            match r {
                Runner::Destination(m, p) => {
                    let k = m.cfg.horizon();
                    let mix = mixture_with(p, m, s)?;
                    let grid = discretize(&mix, s.local, m.cfg.theta_bins)?.marginal();
                    rows.push(EvalRow {
                        track_id: s.track_id,
                        horizon_s: k as f64 / rate_hz,
                        predictor: name.to_string(),
                        prob_mass: grid_mass_in_circle(&grid, s.future_at(k)?.0, area)?,
                    });
                }
                Runner::Planner(m, p) => {
                    let pred = predict_with(p, m, s)?;
                    let every = m.cfg.window.planner_every;
                    let ks: Vec<usize> = (1..=pred.stack.len()).map(|t| t * every).collect();
                    let gt = ks.iter().map(|k| Ok(s.future_at(*k)?.0)).collect::<Result<Vec<_>>>()?;
                    let hs: Vec<f64> = ks.iter().map(|k| *k as f64 / rate_hz).collect();
                    rows.extend(evaluate_grids(&pred.stack.grids, &gt, &hs, s.track_id, name, area)?);
                }
                Runner::Imm(cfg, noise, horizons) => {
                    let Some(&last) = horizons.iter().max() else { continue };
                    if horizons.contains(&0) {
                        return Err(invalid("IMM horizons start at one sample ahead"));
                    }
                    let state = ImmState::track(&s.history.positions, cfg, *noise)?;
                    let all = state.predict(last, 1.0 / rate_hz);
                    let preds: Vec<_> = horizons.iter().map(|k| all[*k - 1]).collect();
                    let gt = horizons.iter().map(|k| Ok(s.future_at(*k)?.0)).collect::<Result<Vec<_>>>()?;
                    let hs: Vec<f64> = horizons.iter().map(|k| *k as f64 / rate_hz).collect();
                    rows.extend(evaluate_gaussians(&preds, &gt, &hs, s.track_id, name, area)?);
                }
            }
        }
    }
    Ok(rows)
}
