//! The differentiable prediction pipeline as one computation graph.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndgraph::{Graph, Inputs, NodeId, ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gridworld::{filter_kernels_node, frobenius_reg_node, init_filter_weights, GridSpec, FEATURE_CHANNELS, MOVES};
use crate::mixture::{logit_mask, MixtureNodes, DEFAULT_THETA_BINS};
use crate::planner::{fwdbwd_predict_node, mdp_predict_node, policy_node, value_iteration_node, ValueIterationConfig};
use crate::recurrent::{build_rmdn, RmdnConfig};
use crate::scenariolab::{substream, Sample, WindowConfig};
use crate::topology::{TopologyConfig, TopologyMode, TopologyNet};

use super::{compound_loss_node, LossWeights, PRED_LOG_EPS};

pub const FILTER_PREFIX: &str = "filters/";
pub const FILTER_WEIGHTS: &str = "filters/weight";
pub const BACKWARD_PREFIX: &str = "topology_bwd/";
pub const FEATURES_INPUT: &str = "map_features";
pub const START_INPUT: &str = "start";
pub const DEST_INPUT: &str = "dest_point";
pub const TARGETS_INPUT: &str = "targets";
pub const MASK_INPUT: &str = "logit_mask";

/// Logit of the moved-to tap when filters start as one-cell moves.
pub const MOVE_LOGIT: f64 = 4.0;

const STREAM_INIT: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    Mdp,
    Fwdbwd,
}

impl FromStr for PlannerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mdp" => Ok(Self::Mdp),
            "fwdbwd" => Ok(Self::Fwdbwd),
            _ => Err(invalid(format!("planner must be mdp or fwdbwd, got `{s}`"))),
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mdp => "mdp",
            Self::Fwdbwd => "fwdbwd",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterInit {
    /// Box-smoothed standard-normal weights.
    Random,
    /// Each action's kernel peaked on its one-cell move.
    Moves,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub rmdn: RmdnConfig,
    pub topology: TopologyConfig,
    pub planner: PlannerKind,
    pub value_iteration: ValueIterationConfig,
    pub window: WindowConfig,
    pub cell_size: f64,
    pub actions: usize,
    pub filter_size: usize,
    pub filter_init: FilterInit,
    pub theta_bins: usize,
    /// Fwdbwd only: a second topology head for the backward pass.
    pub separate_backward: bool,
    /// Samples ahead of the present that the destination refers to; 0 means
    /// the end of the window's future.
    pub dest_horizon: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            rmdn: RmdnConfig::default(),
            topology: TopologyConfig::default(),
            planner: PlannerKind::Fwdbwd,
            value_iteration: ValueIterationConfig::default(),
            window: WindowConfig::default(),
            cell_size: 0.25,
            actions: MOVES.len(),
            filter_size: 3,
            filter_init: FilterInit::Random,
            theta_bins: DEFAULT_THETA_BINS,
            separate_backward: false,
            dest_horizon: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.rmdn.validate()?;
        self.value_iteration.validate()?;
        self.window.validate()?;
        self.local_spec()?;
        if self.actions == 0 || self.filter_size.is_multiple_of(2) {
            return Err(invalid("need at least one action and an odd filter size"));
        }
        if self.filter_init == FilterInit::Moves && (self.actions > MOVES.len() || self.filter_size < 3) {
            return Err(invalid("move-initialized filters need at most 9 actions and size at least 3"));
        }
        if self.theta_bins == 0 {
            return Err(invalid("need at least one heading bin"));
        }
        if self.dest_horizon > self.window.future {
            return Err(invalid(format!(
                "destination horizon {} exceeds the future window of {}",
                self.dest_horizon, self.window.future
            )));
        }
        self.topology_net()?;
        Ok(())
    }

    pub fn local_spec(&self) -> Result<GridSpec> {
        GridSpec::centered_on(self.window.width, self.window.height, self.cell_size, [0.0, 0.0])
    }

    /// Destination offset in samples.
    pub fn horizon(&self) -> usize {
        if self.dest_horizon == 0 {
            self.window.future
        } else {
            self.dest_horizon
        }
    }

    pub fn planner_steps(&self) -> usize {
        self.window.planner_steps()
    }

    pub fn topology_net(&self) -> Result<TopologyNet> {
        let mode = match self.planner {
            PlannerKind::Mdp => TopologyMode::Reward,
            PlannerKind::Fwdbwd => TopologyMode::Transition,
        };
        TopologyNet::new(self.topology.clone(), mode, FEATURE_CHANNELS.len(), self.actions)
    }

    fn backward_net(&self) -> Result<Option<TopologyNet>> {
        Ok(if self.separate_backward && self.planner == PlannerKind::Fwdbwd {
            Some(self.topology_net()?.with_prefix(BACKWARD_PREFIX))
        } else {
            None
        })
    }
}

fn move_filter_weights(actions: usize, k: usize) -> Result<Tensor> {
    let half = (k / 2) as i64;
    let mut data = vec![0.0; actions * k * k];
    for (a, m) in MOVES.iter().take(actions).enumerate() {
        let (x, y) = ((half + m[0]) as usize, (half + m[1]) as usize);
        data[(a * k + y) * k + x] = MOVE_LOGIT;
    }
    Ok(Tensor::new(vec![actions, k, k], data)?)
}

/// Configuration plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub cfg: ModelConfig,
    pub params: ParamStore,
}

pub const MODEL_FILE: &str = "model.json";
pub const PARAMS_FILE: &str = "params.ckpt";

impl ModelBundle {
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = substream(seed, STREAM_INIT);
        let mut params = cfg.rmdn.init_params(&mut rng)?;
        params.merge(&cfg.topology_net()?.init_params(&mut rng)?);
        if let Some(b) = cfg.backward_net()? {
            params.merge(&b.init_params(&mut rng)?);
        }
        let w = match cfg.filter_init {
            FilterInit::Random => init_filter_weights(&mut rng, cfg.actions, cfg.filter_size)?,
            FilterInit::Moves => move_filter_weights(cfg.actions, cfg.filter_size)?,
        };
        params.insert(FILTER_WEIGHTS, w);
        Ok(Self { cfg, params })
    }

    /// Writes `model.json` and `params.ckpt` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(&self.cfg).map_err(|e| invalid(e.to_string()))?;
        fs::write(dir.join(MODEL_FILE), text + "\n")?;
        self.params.save(dir.join(PARAMS_FILE))?;
        Ok(())
    }

    /// Loads `model.json` from `dir` and parameters from `params`, or from
    /// `params.ckpt` when `None`.
    pub fn load(dir: impl AsRef<Path>, params: Option<&Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MODEL_FILE);
        let text = fs::read_to_string(&path)?;
        let cfg: ModelConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        let file = params.map(Path::to_path_buf).unwrap_or_else(|| dir.join(PARAMS_FILE));
        Ok(Self {
            cfg,
            params: ParamStore::load(file)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct PlannerNodes {
    /// Discretized destination `[Θ, H, W]` and its heading marginal `[1, H, W]`.
    pub joint: NodeId,
    pub marginal: NodeId,
    pub log_total: NodeId,
    /// Softmax kernels `[M, k, k]`.
    pub kernels: NodeId,
    /// Reward maps (mdp) or action distributions (fwdbwd), `[M, H, W]`.
    pub topology: NodeId,
    /// Per-cell action distributions used to move mass forward.
    pub actions: NodeId,
    pub backward: Option<NodeId>,
    pub value: Option<NodeId>,
    /// One `[1, H, W]` grid per planner step.
    pub stack: Vec<NodeId>,
    pub pred_nll: NodeId,
    pub reg: NodeId,
}

#[derive(Clone, Debug)]
pub struct PipelineNodes {
    pub raw: NodeId,
    pub dest_nll: NodeId,
    pub planner: Option<PlannerNodes>,
}

/// A graph built once per model configuration and evaluated per sample.
pub struct Pipeline {
    pub cfg: ModelConfig,
    pub graph: Graph,
    pub nodes: PipelineNodes,
}

impl Pipeline {
    /// Destination network and its loss only.
    pub fn destination(cfg: &ModelConfig) -> Result<Self> {
        Self::build(cfg, false)
    }

    /// Everything from the track to the prediction loss.
    pub fn joint(cfg: &ModelConfig) -> Result<Self> {
        Self::build(cfg, true)
    }

    fn build(cfg: &ModelConfig, with_planner: bool) -> Result<Self> {
        cfg.validate()?;
        let mut g = Graph::new();
        let rmdn = build_rmdn(&mut g, &cfg.rmdn, cfg.window.history)?;
        let raw = rmdn.last();
        let mask = g.input(MASK_INPUT, &[cfg.rmdn.components])?;
        let mix = MixtureNodes::from_raw(&mut g, raw, Some(mask))?;
        let point = g.input(DEST_INPUT, &[3])?;
        let ll = mix.log_density_at(&mut g, point)?;
        let dest_nll = g.neg(ll)?;
        let planner = if with_planner {
            Some(Self::build_planner(cfg, &mut g, &mix)?)
        } else {
            None
        };
        Ok(Self {
            cfg: cfg.clone(),
            graph: g,
            nodes: PipelineNodes { raw, dest_nll, planner },
        })
    }

    fn build_planner(cfg: &ModelConfig, g: &mut Graph, mix: &MixtureNodes) -> Result<PlannerNodes> {
        let spec = cfg.local_spec()?;
        let (h, w) = (spec.height, spec.width);
        let steps = cfg.planner_steps();
        let disc = mix.discretize(g, spec, cfg.theta_bins)?;
        let features = g.input(FEATURES_INPUT, &[FEATURE_CHANNELS.len(), h, w])?;
        let start = g.input(START_INPUT, &[1, h, w])?;
        let targets = g.input(TARGETS_INPUT, &[steps, h * w])?;
        let fw = g.param(FILTER_WEIGHTS, &[cfg.actions, cfg.filter_size, cfg.filter_size])?;
        let kernels = filter_kernels_node(g, fw)?;
        let topology = cfg.topology_net()?.build(g, disc.marginal, features)?;
        let (actions, backward, value, stack) = match cfg.planner {
            PlannerKind::Mdp => {
                let vi = value_iteration_node(g, topology, kernels, &cfg.value_iteration)?;
                let policy = policy_node(g, vi.q, cfg.value_iteration.temperature)?;
                let stack = mdp_predict_node(g, start, policy, kernels, steps)?;
                (policy, None, Some(vi.v), stack)
            }
            PlannerKind::Fwdbwd => {
                let backward = match cfg.backward_net()? {
                    Some(net) => Some(net.build(g, disc.marginal, features)?),
                    None => None,
                };
                let stack = fwdbwd_predict_node(g, start, disc.marginal, kernels, topology, backward, steps)?;
                (topology, backward, None, stack)
            }
        };
        let mut terms = Vec::with_capacity(steps);
        for (t, s) in stack.iter().enumerate() {
            let flat = g.reshape(*s, &[h * w])?;
            let row = g.slice(targets, 0, t, 1)?;
            let row = g.reshape(row, &[h * w])?;
            let hit = g.mul(flat, row)?;
            let p = g.sum(hit)?;
            let p = g.offset(p, PRED_LOG_EPS)?;
            terms.push(g.log(p)?);
        }
        let ll = g.add_all(&terms)?;
        let pred_nll = g.neg(ll)?;
        let reg = frobenius_reg_node(g, kernels)?;
        Ok(PlannerNodes {
            joint: disc.joint,
            marginal: disc.marginal,
            log_total: disc.log_total,
            kernels,
            topology,
            actions,
            backward,
            value,
            stack,
            pred_nll,
            reg,
        })
    }

    /// Adds the weighted loss as a scalar node.
    pub fn total(&mut self, w: &LossWeights) -> Result<NodeId> {
        let p = self.nodes.planner.as_ref().ok_or_else(|| invalid("destination-only pipeline has no compound loss"))?;
        let (pred, reg) = (p.pred_nll, p.reg);
        compound_loss_node(&mut self.graph, self.nodes.dest_nll, pred, reg, w)
    }

    /// Graph inputs for one sample. `keep` flags surviving mixture
    /// components; `None` keeps all.
    pub fn inputs(&self, sample: &Sample, keep: Option<&[bool]>) -> Result<Inputs> {
        let cfg = &self.cfg;
        if sample.history.len() != cfg.window.history {
            return Err(invalid(format!(
                "sample has {} history steps, model expects {}",
                sample.history.len(),
                cfg.window.history
            )));
        }
        let mut inputs = sample.history.to_inputs(&cfg.rmdn)?;
        let n = cfg.rmdn.components;
        let mask = match keep {
            Some(k) if k.len() != n => return Err(invalid(format!("dropout pattern has {} flags for {n} components", k.len()))),
            Some(k) => logit_mask(k),
            None => Tensor::zeros(&[n]),
        };
        inputs.insert(MASK_INPUT.into(), mask);
        let (p, psi) = sample.future_at(cfg.horizon())?;
        inputs.insert(DEST_INPUT.into(), Tensor::vector(vec![p[0], p[1], psi]));
        if self.nodes.planner.is_some() {
            let spec = cfg.local_spec()?;
            if !sample.local.same_shape(&spec) || sample.features.num_channels() != FEATURE_CHANNELS.len() {
                return Err(invalid("sample window does not match the model grid"));
            }
            let steps = cfg.planner_steps();
            if sample.targets.len() != steps {
                return Err(invalid(format!("sample has {} planner targets, model expects {steps}", sample.targets.len())));
            }
            inputs.insert(FEATURES_INPUT.into(), sample.features.to_tensor());
            let mut start = Tensor::zeros(&[1, spec.height, spec.width]);
            start.data_mut()[spec.index(sample.start.0, sample.start.1)] = 1.0;
            inputs.insert(START_INPUT.into(), start);
            let mut targets = Tensor::zeros(&[steps, spec.cells()]);
            for (t, (i, j)) in sample.targets.iter().enumerate() {
                targets.data_mut()[t * spec.cells() + spec.index(*i, *j)] = 1.0;
            }
            inputs.insert(TARGETS_INPUT.into(), targets);
        }
        Ok(inputs)
    }
}
