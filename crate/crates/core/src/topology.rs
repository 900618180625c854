//! Fully convolutional map from (destination marginal, environment features)
//! to per-action reward maps or per-cell action distributions.

use std::fmt;
use std::str::FromStr;

use ndgraph::{Graph, Inputs, NodeId, ParamStore, Tensor};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gridworld::{FeatureMap, StateGrid};

pub const PREFIX: &str = "topology/";

/// Added to every sigmoid output in transition mode before normalizing.
pub const NORMALIZE_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyMode {
    Reward,
    Transition,
}

impl FromStr for TopologyMode {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reward" => Ok(Self::Reward),
            "transition" => Ok(Self::Transition),
            _ => Err(invalid(format!("topology mode must be `reward` or `transition`, got `{s}`"))),
        }
    }
}

impl fmt::Display for TopologyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Reward => "reward",
            Self::Transition => "transition",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub layers: usize,
    pub kernel: usize,
    pub hidden: usize,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            kernel: 5,
            hidden: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopologyNet {
    pub cfg: TopologyConfig,
    pub mode: TopologyMode,
    pub feature_channels: usize,
    pub actions: usize,
    /// Parameter name prefix, [`PREFIX`] by default.
    pub prefix: String,
}

impl TopologyNet {
    pub fn new(cfg: TopologyConfig, mode: TopologyMode, feature_channels: usize, actions: usize) -> Result<Self> {
        if cfg.layers == 0 || cfg.hidden == 0 || actions == 0 {
            return Err(invalid("topology net needs layers, hidden channels and actions"));
        }
        if cfg.kernel.is_multiple_of(2) {
            return Err(invalid(format!("topology kernel must be odd, got {}", cfg.kernel)));
        }
        Ok(Self {
            cfg,
            mode,
            feature_channels,
            actions,
            prefix: PREFIX.to_string(),
        })
    }

    pub fn with_prefix(mut self, prefix: impl Into<String>) -> Self {
        self.prefix = prefix.into();
        self
    }

    /// Receptive-field radius in cells.
    pub fn radius(&self) -> usize {
        self.cfg.layers * (self.cfg.kernel / 2)
    }

    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let k = self.cfg.kernel;
        let mut chans = vec![1 + self.feature_channels];
        chans.extend(std::iter::repeat_n(self.cfg.hidden, self.cfg.layers - 1));
        chans.push(self.actions);
        let mut v = Vec::new();
        for l in 0..self.cfg.layers {
            v.push((format!("{}conv{l}/weight", self.prefix), vec![chans[l + 1], chans[l], k, k]));
            v.push((format!("{}conv{l}/bias", self.prefix), vec![chans[l + 1]]));
        }
        v
    }

    /// Uniform weights scaled by fan-in, zero biases.
    pub fn init_params(&self, rng: &mut impl Rng) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        for (name, shape) in self.param_shapes() {
            let t = if shape.len() == 4 {
                let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
                let u = Uniform::new(-1.0, 1.0).map_err(|e| invalid(e.to_string()))?;
                let scale = (3.0 / fan_in).sqrt();
                Tensor::new(shape.clone(), (0..shape.iter().product()).map(|_| scale * u.sample(rng)).collect())?
            } else {
                Tensor::zeros(&shape)
            };
            store.insert(name, t);
        }
        Ok(store)
    }

    /// Output `[M, H, W]` for a destination `[1, H, W]` and features `[C, H, W]`.
    pub fn build(&self, g: &mut Graph, dest: NodeId, features: NodeId) -> Result<NodeId> {
        let ds = g.shape(dest).to_vec();
        let fs = g.shape(features).to_vec();
        if ds.len() != 3 || ds[0] != 1 || fs.len() != 3 || fs[0] != self.feature_channels || ds[1..] != fs[1..] {
            return Err(invalid(format!(
                "topology input shapes disagree: destination {ds:?}, features {fs:?} ({} channels expected)",
                self.feature_channels
            )));
        }
        let mut x = if self.feature_channels > 0 {
            g.concat(&[dest, features], 0)?
        } else {
            dest
        };
        let shapes = self.param_shapes();
        for l in 0..self.cfg.layers {
            let w = g.param(&shapes[2 * l].0, &shapes[2 * l].1)?;
            let b = g.param(&shapes[2 * l + 1].0, &shapes[2 * l + 1].1)?;
            let out = shapes[2 * l].1[0];
            let b = g.reshape(b, &[out, 1, 1])?;
            let y = g.conv2d(x, w)?;
            x = g.add(y, b)?;
            if l + 1 < self.cfg.layers {
                x = g.tanh(x)?;
            }
        }
        if self.mode == TopologyMode::Transition {
            let s = g.sigmoid(x)?;
            let s = g.offset(s, NORMALIZE_EPS)?;
            let total = g.sum_axis(s, 0)?;
            x = g.div(s, total)?;
        }
        Ok(x)
    }

    fn evaluate(&self, params: &ParamStore, dest: &StateGrid, features: &FeatureMap) -> Result<Tensor> {
        if !dest.spec.same_shape(&features.spec) {
            return Err(invalid("destination and feature grids differ in shape"));
        }
        let mut g = Graph::new();
        let d = g.input("dest", &[1, dest.spec.height, dest.spec.width])?;
        let f = g.input("features", &[features.num_channels(), features.spec.height, features.spec.width])?;
        let out = self.build(&mut g, d, f)?;
        let mut inputs = Inputs::new();
        inputs.insert("dest".into(), dest.to_tensor());
        inputs.insert("features".into(), features.to_tensor());
        Ok(g.forward(params, &inputs)?.get(out).clone())
    }

    /// Per-action reward maps, unbounded.
    pub fn forward_reward(&self, params: &ParamStore, dest: &StateGrid, features: &FeatureMap) -> Result<Tensor> {
        if self.mode != TopologyMode::Reward {
            return Err(invalid("network was built for transition mode"));
        }
        self.evaluate(params, dest, features)
    }

    /// Per-cell action distributions.
    pub fn forward_transitions(&self, params: &ParamStore, dest: &StateGrid, features: &FeatureMap) -> Result<Tensor> {
        if self.mode != TopologyMode::Transition {
            return Err(invalid("network was built for reward mode"));
        }
        self.evaluate(params, dest, features)
    }
}
