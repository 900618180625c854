//! Gaussian–von-Mises mixture over destination position and heading.
//!
//! A network emits 8 raw values per component, laid out component-major as
//! `[m_x, m_y, s_x, s_y, r, p, k, g]`. Activation maps them to
//! `σ = exp(s)`, `ρ = tanh(r)`, `κ = exp(k)`, `γ = g` and `π = softmax(p)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndgraph::{Graph, NodeId, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gridworld::{GridSpec, StateGrid};

pub const RAW_PER_COMPONENT: usize = 8;

/// Additive logit that removes a component under mixing dropout.
pub const MASKED_LOGIT: f64 = -1e30;

pub const DEFAULT_THETA_BINS: usize = 8;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Wraps an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let y = a.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// log I₀(κ) for κ > 0.
pub fn log_bessel_i0(kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(invalid(format!("Bessel argument must be positive, got {kappa}")));
    }
    Ok(ndgraph::special::log_bessel_i0(kappa))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub pi: f64,
    pub mu: [f64; 2],
    pub sigma: [f64; 2],
    pub rho: f64,
    pub gamma: f64,
    pub kappa: f64,
}

impl Component {
    pub fn log_density(&self, x: [f64; 2], psi: f64) -> f64 {
        let dx = (x[0] - self.mu[0]) / self.sigma[0];
        let dy = (x[1] - self.mu[1]) / self.sigma[1];
        let one_m = 1.0 - self.rho * self.rho;
        let q = (dx * dx + dy * dy - 2.0 * self.rho * dx * dy) / one_m;
        let gauss = -LN_2PI - self.sigma[0].ln() - self.sigma[1].ln() - 0.5 * one_m.ln() - 0.5 * q;
        let vm = self.kappa * (psi - self.gamma).cos() - LN_2PI - ndgraph::special::log_bessel_i0(self.kappa);
        gauss + vm
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureParams {
    pub components: Vec<Component>,
}

impl MixtureParams {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.pi).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(invalid("mixture has no components"));
        }
        let total: f64 = self.components.iter().map(|c| c.pi).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("mixture weights sum to {total}")));
        }
        for (i, c) in self.components.iter().enumerate() {
            let ok = c.pi > 0.0
                && c.sigma.iter().all(|s| *s > 0.0 && s.is_finite())
                && c.rho.abs() < 1.0
                && c.kappa > 0.0
                && c.kappa.is_finite()
                && c.gamma > -PI
                && c.gamma <= PI
                && c.mu.iter().all(|m| m.is_finite());
            if !ok {
                return Err(invalid(format!("component {i} violates the parameter constraints")));
            }
        }
        Ok(())
    }

    /// Component with the largest weight.
    pub fn dominant(&self) -> &Component {
        self.components
            .iter()
            .reduce(|a, b| if b.pi > a.pi { b } else { a })
            .expect("nonempty mixture")
    }

    pub fn log_density(&self, x: [f64; 2], psi: f64) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.pi.max(ndgraph::LOG_FLOOR).ln() + c.log_density(x, psi))
            .collect();
        log_sum_exp(&terms)
    }

    /// One line per component: `pi mu_x mu_y sigma_x sigma_y rho gamma kappa`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.components {
            s.push_str(&format!(
                "{} {} {} {} {} {} {} {}\n",
                c.pi, c.mu[0], c.mu[1], c.sigma[0], c.sigma[1], c.rho, c.gamma, c.kappa
            ));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut components = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| invalid(format!("mixture record line {}: bad number", n + 1)))?;
            if v.len() != 8 {
                return Err(invalid(format!("mixture record line {}: expected 8 values", n + 1)));
            }
            components.push(Component {
                pi: v[0],
                mu: [v[1], v[2]],
                sigma: [v[3], v[4]],
                rho: v[5],
                gamma: v[6],
                kappa: v[7],
            });
        }
        let m = Self { components };
        m.validate()?;
        Ok(m)
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn check_raw(raw: &[f64]) -> Result<usize> {
    if raw.is_empty() || !raw.len().is_multiple_of(RAW_PER_COMPONENT) {
        return Err(invalid(format!(
            "raw mixture output must hold 8 values per component, got {}",
            raw.len()
        )));
    }
    if !raw.iter().all(|v| v.is_finite()) {
        return Err(invalid("raw mixture output must be finite"));
    }
    Ok(raw.len() / RAW_PER_COMPONENT)
}

pub fn activate(raw: &[f64]) -> Result<MixtureParams> {
    let n = check_raw(raw)?;
    let logits: Vec<f64> = (0..n).map(|i| raw[i * 8 + 5]).collect();
    let lse = log_sum_exp(&logits);
    let components = (0..n)
        .map(|i| {
            let c = &raw[i * 8..(i + 1) * 8];
            Component {
                pi: (logits[i] - lse).exp(),
                mu: [c[0], c[1]],
                sigma: [c[2].exp(), c[3].exp()],
                rho: c[4].tanh(),
                gamma: wrap_angle(c[7]),
                kappa: c[6].exp(),
            }
        })
        .collect();
    Ok(MixtureParams { components })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NllMode {
    #[default]
    Mean,
    Min,
}

impl FromStr for NllMode {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "min" => Ok(Self::Min),
            _ => Err(invalid(format!("nll mode must be `mean` or `min`, got `{s}`"))),
        }
    }
}

impl fmt::Display for NllMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mean => "mean",
            Self::Min => "min",
        })
    }
}

/// Per-example weights whose dot product with `losses` gives the batch loss
/// (and its gradient). Min mode selects the first arg-min.
pub fn loss_weights(losses: &[f64], mode: NllMode) -> Result<Vec<f64>> {
    if losses.is_empty() {
        return Err(invalid("loss batch is empty"));
    }
    let b = losses.len();
    Ok(match mode {
        NllMode::Mean => vec![1.0 / b as f64; b],
        NllMode::Min => {
            let mut best = 0;
            for (k, l) in losses.iter().enumerate() {
                if *l < losses[best] {
                    best = k;
                }
            }
            let mut w = vec![0.0; b];
            w[best] = 1.0;
            w
        }
    })
}

pub fn reduce_losses(losses: &[f64], mode: NllMode) -> Result<f64> {
    if losses.is_empty() {
        return Err(invalid("loss batch is empty"));
    }
    Ok(match mode {
        NllMode::Mean => losses.iter().sum::<f64>() / losses.len() as f64,
        NllMode::Min => losses.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// Batch NLL of ground-truth (position, heading) pairs.
pub fn nll_loss(params: &[MixtureParams], gt: &[([f64; 2], f64)], mode: NllMode) -> Result<f64> {
    if params.len() != gt.len() {
        return Err(invalid("one ground-truth point per mixture is required"));
    }
    let losses: Vec<f64> = params.iter().zip(gt).map(|(p, (x, psi))| -p.log_density(*x, *psi)).collect();
    reduce_losses(&losses, mode)
}

/// Graph form of the batch reduction over scalar per-example losses.
pub fn nll_loss_node(g: &mut Graph, losses: &[NodeId], mode: NllMode) -> Result<NodeId> {
    if losses.is_empty() {
        return Err(invalid("loss batch is empty"));
    }
    let parts = losses
        .iter()
        .map(|l| g.reshape(*l, &[1]))
        .collect::<ndgraph::Result<Vec<_>>>()?;
    let stacked = g.concat(&parts, 0)?;
    Ok(match mode {
        NllMode::Mean => g.mean(stacked)?,
        NllMode::Min => g.min(stacked)?,
    })
}

/// Survival flags, each component independently dropped with probability `rate`.
pub fn dropout_mask(n: usize, rate: f64, rng: &mut impl Rng) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(invalid(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    Ok((0..n).map(|_| rate == 0.0 || rng.random::<f64>() >= rate).collect())
}

/// Additive logit mask for a survival pattern. A fully dropped pattern
/// falls back to keeping every component.
pub fn logit_mask(keep: &[bool]) -> Tensor {
    let any = keep.iter().any(|k| *k);
    Tensor::vector(
        keep.iter()
            .map(|k| if *k || !any { 0.0 } else { MASKED_LOGIT })
            .collect(),
    )
}

pub fn mixing_dropout(pi: &[f64], rate: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let keep = dropout_mask(pi.len(), rate, rng)?;
    if !keep.iter().any(|k| *k) {
        return Ok(pi.to_vec());
    }
    let kept: f64 = pi.iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| p).sum();
    Ok(pi.iter().zip(&keep).map(|(p, k)| if *k { p / kept } else { 0.0 }).collect())
}

/// Heading bin centers θ_b = −π + (b + 1)·2π/Θ.
pub fn heading_bins(theta_bins: usize) -> Vec<f64> {
    (0..theta_bins)
        .map(|b| -PI + (b + 1) as f64 * 2.0 * PI / theta_bins as f64)
        .collect()
}

/// Mixture mass per (heading bin, cell), stored `[Θ, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DestinationGrid {
    pub spec: GridSpec,
    pub theta_bins: usize,
    values: Vec<f64>,
    /// Sum of density × cell volume before renormalization.
    pub raw_mass: f64,
}

impl DestinationGrid {
    pub fn from_tensor(spec: GridSpec, t: &Tensor, raw_mass: f64) -> Result<Self> {
        let s = t.shape();
        if s.len() != 3 || s[1] != spec.height || s[2] != spec.width {
            return Err(invalid(format!("destination tensor has shape {s:?}")));
        }
        Ok(Self {
            spec,
            theta_bins: s[0],
            values: t.data().to_vec(),
            raw_mass,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize, bin: usize) -> f64 {
        self.values[bin * self.spec.cells() + self.spec.index(i, j)]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Position distribution, summed over heading bins.
    pub fn marginal(&self) -> StateGrid {
        let n = self.spec.cells();
        let mut m = vec![0.0; n];
        for chunk in self.values.chunks(n) {
            for (a, b) in m.iter_mut().zip(chunk) {
                *a += b;
            }
        }
        StateGrid::new(self.spec, m).expect("nonnegative marginal")
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.theta_bins, self.spec.height, self.spec.width],
            self.values.clone(),
        )
        .expect("destination tensor shape")
    }
}

/// Mixture density at every (bin center, cell center) times the cell volume
/// `cell_area·2π/Θ`, renormalized to sum to one.
pub fn discretize(params: &MixtureParams, spec: GridSpec, theta_bins: usize) -> Result<DestinationGrid> {
    params.validate()?;
    if theta_bins == 0 {
        return Err(invalid("need at least one heading bin"));
    }
    let log_vol = (spec.cell_area() * 2.0 * PI / theta_bins as f64).ln();
    let bins = heading_bins(theta_bins);
    let mut logs = Vec::with_capacity(theta_bins * spec.cells());
    let mut terms = vec![0.0; params.len()];
    for psi in &bins {
        for j in 0..spec.height {
            for i in 0..spec.width {
                let x = spec.cell_center(i, j);
                for (t, c) in terms.iter_mut().zip(&params.components) {
                    *t = c.pi.max(ndgraph::LOG_FLOOR).ln() + c.log_density(x, *psi);
                }
                logs.push(log_sum_exp(&terms) + log_vol);
            }
        }
    }
    let total = log_sum_exp(&logs);
    Ok(DestinationGrid {
        spec,
        theta_bins,
        values: logs.iter().map(|l| (l - total).exp()).collect(),
        raw_mass: total.exp(),
    })
}

/// Activated mixture parameters as graph nodes, each of shape `[N]` (or
/// reshaped for broadcasting).
#[derive(Clone, Copy, Debug)]
pub struct MixtureNodes {
    pub components: usize,
    pub mu_x: NodeId,
    pub mu_y: NodeId,
    pub log_sigma_x: NodeId,
    pub log_sigma_y: NodeId,
    pub r: NodeId,
    pub log_pi: NodeId,
    pub log_kappa: NodeId,
    pub gamma: NodeId,
}

impl MixtureNodes {
    /// Splits a raw `[8N]` node. `logit_mask`, if given, is an `[N]` node
    /// added to the mixing logits.
    pub fn from_raw(g: &mut Graph, raw: NodeId, logit_mask: Option<NodeId>) -> Result<Self> {
        let len = g.shape(raw).iter().product::<usize>();
        if len == 0 || len % RAW_PER_COMPONENT != 0 {
            return Err(invalid(format!("raw node has {len} values, need a multiple of 8")));
        }
        let n = len / RAW_PER_COMPONENT;
        let table = g.reshape(raw, &[n, RAW_PER_COMPONENT])?;
        let col = |g: &mut Graph, c: usize| -> Result<NodeId> {
            let s = g.slice(table, 1, c, 1)?;
            Ok(g.reshape(s, &[n])?)
        };
        let mu_x = col(g, 0)?;
        let mu_y = col(g, 1)?;
        let log_sigma_x = col(g, 2)?;
        let log_sigma_y = col(g, 3)?;
        let r = col(g, 4)?;
        let mut logits = col(g, 5)?;
        let log_kappa = col(g, 6)?;
        let gamma = col(g, 7)?;
        if let Some(mask) = logit_mask {
            logits = g.add(logits, mask)?;
        }
        let lse = g.logsumexp(logits, 0)?;
        let log_pi = g.sub(logits, lse)?;
        Ok(Self {
            components: n,
            mu_x,
            mu_y,
            log_sigma_x,
            log_sigma_y,
            r,
            log_pi,
            log_kappa,
            gamma,
        })
    }

    fn reshaped(&self, g: &mut Graph, shape: &[usize]) -> Result<Self> {
        let mut f = |x: NodeId| g.reshape(x, shape);
        Ok(Self {
            components: self.components,
            mu_x: f(self.mu_x)?,
            mu_y: f(self.mu_y)?,
            log_sigma_x: f(self.log_sigma_x)?,
            log_sigma_y: f(self.log_sigma_y)?,
            r: f(self.r)?,
            log_pi: f(self.log_pi)?,
            log_kappa: f(self.log_kappa)?,
            gamma: f(self.gamma)?,
        })
    }

    /// log π_i plus the Gaussian log density, broadcast against `x`, `y`.
    fn weighted_gauss(&self, g: &mut Graph, x: NodeId, y: NodeId) -> Result<NodeId> {
        let ex = g.sub(x, self.mu_x)?;
        let isx = g.neg(self.log_sigma_x)?;
        let isx = g.exp(isx)?;
        let dx = g.mul(ex, isx)?;
        let ey = g.sub(y, self.mu_y)?;
        let isy = g.neg(self.log_sigma_y)?;
        let isy = g.exp(isy)?;
        let dy = g.mul(ey, isy)?;
        let rho = g.tanh(self.r)?;
        let dx2 = g.mul(dx, dx)?;
        let dy2 = g.mul(dy, dy)?;
        let dxy = g.mul(dx, dy)?;
        let cross = g.mul(rho, dxy)?;
        let cross = g.scale(cross, 2.0)?;
        let sq = g.add(dx2, dy2)?;
        let q = g.sub(sq, cross)?;
        let lc = g.log_cosh(self.r)?;
        let two_lc = g.scale(lc, 2.0)?;
        let inv_one_m = g.exp(two_lc)?;
        let quad = g.mul(q, inv_one_m)?;
        let quad = g.scale(quad, -0.5)?;
        let norm = g.add(self.log_sigma_x, self.log_sigma_y)?;
        let norm = g.sub(lc, norm)?;
        let norm = g.offset(norm, -LN_2PI)?;
        let norm = g.add(norm, self.log_pi)?;
        Ok(g.add(norm, quad)?)
    }

    /// von Mises log density, broadcast against `psi`.
    fn von_mises(&self, g: &mut Graph, psi: NodeId) -> Result<NodeId> {
        let kappa = g.exp(self.log_kappa)?;
        let d = g.sub(psi, self.gamma)?;
        let c = g.cos(d)?;
        let kc = g.mul(kappa, c)?;
        let li0 = g.log_bessel_i0(kappa)?;
        let v = g.sub(kc, li0)?;
        Ok(g.offset(v, -LN_2PI)?)
    }

    /// Scalar log p(x, ψ) at a point node `[3]` holding (x, y, ψ).
    pub fn log_density_at(&self, g: &mut Graph, point: NodeId) -> Result<NodeId> {
        let x = g.slice(point, 0, 0, 1)?;
        let y = g.slice(point, 0, 1, 1)?;
        let psi = g.slice(point, 0, 2, 1)?;
        let wg = self.weighted_gauss(g, x, y)?;
        let vm = self.von_mises(g, psi)?;
        let terms = g.add(wg, vm)?;
        let lse = g.logsumexp(terms, 0)?;
        Ok(g.reshape(lse, &[])?)
    }

    /// Graph form of [`discretize`].
    pub fn discretize(&self, g: &mut Graph, spec: GridSpec, theta_bins: usize) -> Result<DiscretizedNodes> {
        if theta_bins == 0 {
            return Err(invalid("need at least one heading bin"));
        }
        let (w, h) = (spec.width, spec.height);
        let n = self.components;
        let p = self.reshaped(g, &[n, 1, 1, 1])?;
        let (mx, my) = spec.mesh();
        let x = g.constant(mx.reshaped(&[1, 1, h, w])?);
        let y = g.constant(my.reshaped(&[1, 1, h, w])?);
        let psi = g.constant(Tensor::new(vec![1, theta_bins, 1, 1], heading_bins(theta_bins))?);
        let wg = p.weighted_gauss(g, x, y)?;
        let vm = p.von_mises(g, psi)?;
        let terms = g.add(wg, vm)?;
        let per_cell = g.logsumexp(terms, 0)?;
        let log_vol = (spec.cell_area() * 2.0 * PI / theta_bins as f64).ln();
        let per_cell = g.offset(per_cell, log_vol)?;
        let flat = g.reshape(per_cell, &[theta_bins * h * w])?;
        let log_total = g.logsumexp(flat, 0)?;
        let normed = g.sub(flat, log_total)?;
        let joint = g.exp(normed)?;
        let joint = g.reshape(joint, &[theta_bins, h, w])?;
        let marginal = g.sum_axis(joint, 0)?;
        Ok(DiscretizedNodes {
            joint,
            marginal,
            log_total,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DiscretizedNodes {
    /// `[Θ, H, W]`, sums to one.
    pub joint: NodeId,
    /// `[1, H, W]`, summed over heading bins.
    pub marginal: NodeId,
    /// `[1]`, log of the pre-normalization mass.
    pub log_total: NodeId,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_raw_activates_to_unit_component() {
        let p = activate(&[0.0; 8]).unwrap();
        let c = p.components[0];
        assert_eq!((c.pi, c.mu, c.sigma, c.rho, c.gamma, c.kappa), (1.0, [0.0; 2], [1.0; 2], 0.0, 0.0, 1.0));
    }

    #[test]
    fn equal_logits_give_equal_weights() {
        let p = activate(&[0.0; 64]).unwrap();
        assert!(p.components.iter().all(|c| (c.pi - 0.125).abs() < 1e-15));
    }

    #[test]
    fn large_r_keeps_rho_inside() {
        let mut raw = [0.0; 8];
        raw[4] = 10.0;
        let p = activate(&raw).unwrap();
        assert!((p.components[0].rho - 0.9999999958776927).abs() < 1e-15);
        p.validate().unwrap();
    }

    #[test]
    fn activate_rejects_bad_lengths() {
        assert!(activate(&[]).is_err());
        assert!(activate(&[0.0; 9]).is_err());
        assert!(activate(&[f64::NAN; 8]).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn peak_density_with_vanishing_kappa() {
        let mut raw = [0.0; 8];
        raw[6] = -40.0;
        let p = activate(&raw).unwrap();
        let d = p.log_density([0.0, 0.0], 1.3).exp();
        assert!((d - 1.0 / (4.0 * PI * PI)).abs() < 1e-12);
    }

    #[test]
    fn duplicated_component_is_invisible() {
        let raw = [0.3, -0.2, 0.1, -0.4, 0.5, 0.0, 0.7, 1.1];
        let one = activate(&raw).unwrap();
        let two = activate(&[raw, raw].concat()).unwrap();
        for (x, psi) in [([0.0, 0.0], 0.0), ([1.0, -2.0], 2.5), ([-0.3, 0.4], -1.0)] {
            assert!((one.log_density(x, psi) - two.log_density(x, psi)).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_reductions() {
        let l = [2.0, 5.0, 3.0];
        assert!((reduce_losses(&l, NllMode::Mean).unwrap() - 10.0 / 3.0).abs() < 1e-15);
        assert_eq!(reduce_losses(&l, NllMode::Min).unwrap(), 2.0);
        assert_eq!(loss_weights(&l, NllMode::Min).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(
            reduce_losses(&[4.2], NllMode::Mean).unwrap(),
            reduce_losses(&[4.2], NllMode::Min).unwrap()
        );
        assert!(reduce_losses(&[], NllMode::Mean).is_err());
        assert!(nll_loss(&[], &[], NllMode::Min).is_err());
    }

    #[test]
    fn dropout_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pi = [0.2, 0.3, 0.5];
        assert_eq!(mixing_dropout(&pi, 0.0, &mut rng).unwrap(), pi.to_vec());
        assert!(mixing_dropout(&pi, 1.0, &mut rng).is_err());
        // with two components, some draw masks exactly one of them
        loop {
            let d = mixing_dropout(&[0.4, 0.6], 0.5, &mut rng).unwrap();
            if d.contains(&0.0) {
                assert!(d.contains(&1.0));
                break;
            }
        }
        assert_eq!(logit_mask(&[false, false]).data(), &[0.0, 0.0]);
    }

    #[test]
    fn dropout_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 100_000;
        let mut masked = [0usize; 3];
        for _ in 0..draws {
            for (m, k) in masked.iter_mut().zip(dropout_mask(3, 0.5, &mut rng).unwrap()) {
                *m += usize::from(!k);
            }
        }
        for m in masked {
            assert!((m as f64 / draws as f64 - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn text_record_round_trip() {
        let p = activate(&[0.1, 0.2, -0.3, 0.4, 0.5, 0.6, 0.7, -2.8, 1.0, 2.0, 0.0, 0.0, -1.0, 0.3, 2.0, 3.0]).unwrap();
        assert_eq!(MixtureParams::from_text(&p.to_text()).unwrap(), p);
        assert!(MixtureParams::from_text("0.5 1 2\n").is_err());
    }

    #[test]
    fn tight_component_concentrates() {
        let spec = GridSpec::new(9, 9, 0.25, [0.0, 0.0]).unwrap();
        let target = spec.cell_center(4, 3);
        let bin = heading_bins(8)[2];
        let raw = [target[0], target[1], -5.0, -5.0, 0.0, 0.0, 5.0, bin];
        let d = discretize(&activate(&raw).unwrap(), spec, 8).unwrap();
        assert!(d.get(4, 3, 2) >= 0.99);
        assert!((d.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_modes_carry_equal_mass() {
        let spec = GridSpec::new(11, 5, 0.5, [0.0, 0.0]).unwrap();
        let a = spec.cell_center(2, 2);
        let b = spec.cell_center(8, 2);
        let raw = [
            a[0], a[1], -1.0, -1.0, 0.0, 0.0, 0.0, 0.0, //
            b[0], b[1], -1.0, -1.0, 0.0, 0.0, 0.0, 0.0,
        ];
        let m = discretize(&activate(&raw).unwrap(), spec, 8).unwrap().marginal();
        assert!((m.get(2, 2) - m.get(8, 2)).abs() < 1e-9);
    }

    #[test]
    fn graph_matches_eager() {
        let spec = GridSpec::new(7, 6, 0.5, [-1.0, -1.5]).unwrap();
        let raw = vec![0.2, -0.1, -0.3, 0.1, 0.4, 0.3, 0.5, 2.0, -0.5, 0.6, 0.0, -0.6, -0.7, -0.2, 1.5, -2.9];
        let mut g = Graph::new();
        let r = g.constant(Tensor::vector(raw.clone()));
        let nodes = MixtureNodes::from_raw(&mut g, r, None).unwrap();
        let pt = g.constant(Tensor::vector(vec![0.3, -0.4, 0.9]));
        let ld = nodes.log_density_at(&mut g, pt).unwrap();
        let disc = nodes.discretize(&mut g, spec, 8).unwrap();
        let v = ndgraph::eval_constant(&g).unwrap();
        let p = activate(&raw).unwrap();
        assert!((v.scalar(ld) - p.log_density([0.3, -0.4], 0.9)).abs() < 1e-12);
        let d = discretize(&p, spec, 8).unwrap();
        for (a, b) in v.get(disc.joint).data().iter().zip(d.values()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((v.get(disc.log_total).item().exp() - d.raw_mass).abs() < 1e-12);
    }

    #[test]
    fn masked_component_drops_out_of_graph_density() {
        let raw = vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let mut g = Graph::new();
        let r = g.constant(Tensor::vector(raw.clone()));
        let mask = g.constant(logit_mask(&[true, false]));
        let nodes = MixtureNodes::from_raw(&mut g, r, Some(mask)).unwrap();
        let pt = g.constant(Tensor::vector(vec![0.5, 0.5, 0.0]));
        let ld = nodes.log_density_at(&mut g, pt).unwrap();
        let v = ndgraph::eval_constant(&g).unwrap();
        let single = activate(&raw[..8]).unwrap();
        assert!((v.scalar(ld) - single.log_density([0.5, 0.5], 0.0)).abs() < 1e-12);
    }
}
