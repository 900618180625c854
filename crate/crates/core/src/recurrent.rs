//! Recurrent mixture density network over observed tracks.
//!
//! Per step the optional feature vector passes through an affine + tanh
//! encoder, is concatenated with the normalized position and fed to an LSTM
//! cell (gate order i, f, o, g). The hidden state is projected to the 8·N raw
//! mixture outputs.

use ndgraph::{Graph, Inputs, NodeId, ParamStore, Tensor};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mixture::{activate, MixtureParams, RAW_PER_COMPONENT};

pub const PREFIX: &str = "rmdn/";
pub const POS_INPUT: &str = "track_pos";
pub const FEAT_INPUT: &str = "track_feat";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmdnConfig {
    pub components: usize,
    pub hidden: usize,
    pub feature_dim: usize,
    pub encoder_dim: usize,
    /// Positions are divided by this (meters) before entering the network.
    pub position_scale: f64,
    /// Radius (meters) of the circle the initial component means are
    /// spread on. 0 starts every mean at the origin.
    pub mean_spread: f64,
}

impl Default for RmdnConfig {
    fn default() -> Self {
        Self {
            components: 8,
            hidden: 64,
            feature_dim: 4,
            encoder_dim: 16,
            position_scale: 8.0,
            mean_spread: 0.0,
        }
    }
}

impl RmdnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 || self.hidden == 0 {
            return Err(invalid("RMDN needs at least one component and one hidden unit"));
        }
        if self.feature_dim > 0 && self.encoder_dim == 0 {
            return Err(invalid("feature encoder width must be positive when features are used"));
        }
        if !(self.position_scale > 0.0) {
            return Err(invalid("position scale must be positive"));
        }
        if !(self.mean_spread >= 0.0 && self.mean_spread.is_finite()) {
            return Err(invalid("mean spread must be finite and nonnegative"));
        }
        Ok(())
    }

    pub fn encoded_dim(&self) -> usize {
        if self.feature_dim == 0 {
            0
        } else {
            self.encoder_dim
        }
    }

    /// LSTM input width D.
    pub fn input_dim(&self) -> usize {
        2 + self.encoded_dim()
    }

    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (h, d, e, f) = (self.hidden, self.input_dim(), self.encoded_dim(), self.feature_dim);
        let out = RAW_PER_COMPONENT * self.components;
        let mut v = Vec::new();
        if f > 0 {
            v.push((format!("{PREFIX}enc/w"), vec![e, f]));
            v.push((format!("{PREFIX}enc/b"), vec![e]));
        }
        v.push((format!("{PREFIX}lstm/w"), vec![4 * h, d + h]));
        v.push((format!("{PREFIX}lstm/b"), vec![4 * h]));
        v.push((format!("{PREFIX}out/w"), vec![out, h]));
        v.push((format!("{PREFIX}out/b"), vec![out]));
        v
    }

    /// Uniform Glorot weights, forget-gate bias 1, output layer scaled down
    /// so the initial mixture sits near the all-zero raw output.
    pub fn init_params(&self, rng: &mut impl Rng) -> Result<ParamStore> {
        self.validate()?;
        let mut store = ParamStore::new();
        for (name, shape) in self.param_shapes() {
            let t = if shape.len() == 2 {
                let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                let gain = if name.ends_with("out/w") { 0.1 } else { 1.0 };
                let u = Uniform::new(-limit, limit).map_err(|e| invalid(e.to_string()))?;
                let data = (0..shape[0] * shape[1]).map(|_| gain * u.sample(rng)).collect();
                Tensor::new(shape, data)?
            } else if name.ends_with("lstm/b") {
                let h = self.hidden;
                let data = (0..4 * h).map(|k| if (h..2 * h).contains(&k) { 1.0 } else { 0.0 }).collect();
                Tensor::new(shape, data)?
            } else if name.ends_with("out/b") && self.components > 1 {
                let mut data = vec![0.0; shape[0]];
                for c in 0..self.components {
                    let a = std::f64::consts::TAU * c as f64 / self.components as f64;
                    data[c * RAW_PER_COMPONENT] = self.mean_spread * a.cos();
                    data[c * RAW_PER_COMPONENT + 1] = self.mean_spread * a.sin();
                }
                Tensor::new(shape, data)?
            } else {
                Tensor::zeros(&shape)
            };
            store.insert(name, t);
        }
        Ok(store)
    }
}

/// Observed history in the local grid frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackInput {
    pub positions: Vec<[f64; 2]>,
    pub features: Vec<Vec<f64>>,
}

impl TrackInput {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn to_inputs(&self, cfg: &RmdnConfig) -> Result<Inputs> {
        if self.positions.is_empty() {
            return Err(invalid("track is empty"));
        }
        let t = self.positions.len();
        if cfg.feature_dim > 0
            && (self.features.len() != t || self.features.iter().any(|f| f.len() != cfg.feature_dim))
        {
            return Err(invalid(format!(
                "need {t} feature vectors of width {}",
                cfg.feature_dim
            )));
        }
        let mut inputs = Inputs::new();
        inputs.insert(
            POS_INPUT.into(),
            Tensor::new(vec![t, 2], self.positions.iter().flatten().copied().collect())?,
        );
        if cfg.feature_dim > 0 {
            inputs.insert(
                FEAT_INPUT.into(),
                Tensor::new(vec![t, cfg.feature_dim], self.features.iter().flatten().copied().collect())?,
            );
        }
        Ok(inputs)
    }
}

#[derive(Clone, Debug)]
pub struct RmdnNodes {
    /// Raw `[8N]` output after every step.
    pub raw: Vec<NodeId>,
    pub hidden: Vec<NodeId>,
}

impl RmdnNodes {
    pub fn last(&self) -> NodeId {
        *self.raw.last().expect("at least one step")
    }
}

/// Gate pre-activations of one LSTM step are sliced in order i, f, o, g.
fn lstm_cell(g: &mut Graph, w: NodeId, b: NodeId, x: NodeId, h: NodeId, c: NodeId, hidden: usize) -> Result<(NodeId, NodeId)> {
    let xh = g.concat(&[x, h], 0)?;
    let z = g.affine(w, xh, b)?;
    let gate = |g: &mut Graph, k: usize| g.slice(z, 0, k * hidden, hidden);
    let zi = gate(g, 0)?;
    let zf = gate(g, 1)?;
    let zo = gate(g, 2)?;
    let zg = gate(g, 3)?;
    let i = g.sigmoid(zi)?;
    let f = g.sigmoid(zf)?;
    let o = g.sigmoid(zo)?;
    let cand = g.tanh(zg)?;
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let tc = g.tanh(c_next)?;
    let h_next = g.mul(o, tc)?;
    Ok((h_next, c_next))
}

/// Unrolls the network over `steps` input rows.
pub fn build_rmdn(g: &mut Graph, cfg: &RmdnConfig, steps: usize) -> Result<RmdnNodes> {
    cfg.validate()?;
    if steps == 0 {
        return Err(invalid("track is empty"));
    }
    let p = |g: &mut Graph, name: &str, shape: &[usize]| g.param(&format!("{PREFIX}{name}"), shape);
    let shapes: std::collections::BTreeMap<String, Vec<usize>> = cfg.param_shapes().into_iter().collect();
    let shape = |n: &str| shapes[&format!("{PREFIX}{n}")].clone();

    let pos = g.input(POS_INPUT, &[steps, 2])?;
    let feat = if cfg.feature_dim > 0 {
        Some(g.input(FEAT_INPUT, &[steps, cfg.feature_dim])?)
    } else {
        None
    };
    let enc = if cfg.feature_dim > 0 {
        Some((p(g, "enc/w", &shape("enc/w"))?, p(g, "enc/b", &shape("enc/b"))?))
    } else {
        None
    };
    let lw = p(g, "lstm/w", &shape("lstm/w"))?;
    let lb = p(g, "lstm/b", &shape("lstm/b"))?;
    let ow = p(g, "out/w", &shape("out/w"))?;
    let ob = p(g, "out/b", &shape("out/b"))?;

    let mut h = g.constant(Tensor::zeros(&[cfg.hidden]));
    let mut c = g.constant(Tensor::zeros(&[cfg.hidden]));
    let mut nodes = RmdnNodes {
        raw: Vec::with_capacity(steps),
        hidden: Vec::with_capacity(steps),
    };
    for t in 0..steps {
        let row = g.slice(pos, 0, t, 1)?;
        let row = g.reshape(row, &[2])?;
        let mut x = g.scale(row, 1.0 / cfg.position_scale)?;
        if let (Some(feat), Some((ew, eb))) = (feat, enc) {
            let f = g.slice(feat, 0, t, 1)?;
            let f = g.reshape(f, &[cfg.feature_dim])?;
            let e = g.affine(ew, f, eb)?;
            let e = g.tanh(e)?;
            x = g.concat(&[x, e], 0)?;
        }
        let (hn, cn) = lstm_cell(g, lw, lb, x, h, c, cfg.hidden)?;
        h = hn;
        c = cn;
        nodes.hidden.push(h);
        nodes.raw.push(g.affine(ow, h, ob)?);
    }
    Ok(nodes)
}

/// Raw mixture outputs after every step of `track`.
pub fn rollout(cfg: &RmdnConfig, params: &ParamStore, track: &TrackInput) -> Result<Vec<Vec<f64>>> {
    let inputs = track.to_inputs(cfg)?;
    let mut g = Graph::new();
    let nodes = build_rmdn(&mut g, cfg, track.len())?;
    let values = g.forward(params, &inputs)?;
    Ok(nodes.raw.iter().map(|n| values.get(*n).data().to_vec()).collect())
}

pub fn predict_destination(cfg: &RmdnConfig, params: &ParamStore, track: &TrackInput) -> Result<MixtureParams> {
    let raw = rollout(cfg, params, track)?;
    activate(raw.last().expect("nonempty rollout"))
}

/// Gate weights `[4H, D+H]` and biases `[4H]` of one LSTM cell.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w: Tensor,
    pub b: Tensor,
}

impl LstmParams {
    pub fn from_store(params: &ParamStore) -> Result<Self> {
        let get = |n: &str| {
            params
                .get(&format!("{PREFIX}lstm/{n}"))
                .cloned()
                .ok_or_else(|| invalid(format!("missing parameter {PREFIX}lstm/{n}")))
        };
        Ok(Self { w: get("w")?, b: get("b")? })
    }

    pub fn hidden(&self) -> usize {
        self.b.numel() / 4
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM update on plain vectors.
pub fn lstm_step(p: &LstmParams, h: &[f64], c: &[f64], x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let hs = p.hidden();
    let cols = x.len() + hs;
    if p.w.shape() != [4 * hs, cols] || p.b.numel() != 4 * hs || h.len() != hs || c.len() != hs {
        return Err(invalid(format!(
            "LSTM shapes disagree: w {:?}, b {:?}, h {}, c {}, x {}",
            p.w.shape(),
            p.b.shape(),
            h.len(),
            c.len(),
            x.len()
        )));
    }
    let xh: Vec<f64> = x.iter().chain(h).copied().collect();
    let z: Vec<f64> = (0..4 * hs)
        .map(|r| {
            let row = &p.w.data()[r * cols..(r + 1) * cols];
            p.b.data()[r] + row.iter().zip(&xh).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    let mut h2 = vec![0.0; hs];
    let mut c2 = vec![0.0; hs];
    for k in 0..hs {
        let i = sigmoid(z[k]);
        let f = sigmoid(z[hs + k]);
        let o = sigmoid(z[2 * hs + k]);
        let g = z[3 * hs + k].tanh();
        c2[k] = f * c[k] + i * g;
        h2[k] = o * c2[k].tanh();
    }
    Ok((h2, c2))
}
