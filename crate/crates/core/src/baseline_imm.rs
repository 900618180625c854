//! Interacting multiple model filter with constant-position and
//! constant-velocity Kalman models over the state `[x, y, vx, vy]`.

use gauss_quad::GaussLegendre;
use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Observation noise variance per axis.
pub const OBSERVATION_NOISE: f64 = 1e-8;

/// Velocity variance (m²/s²) of the constant-position model, which keeps
/// its velocity states pinned near zero.
const CP_VELOCITY_VAR: f64 = 1e-8;

const CP: usize = 0;
const CV: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImmConfig {
    /// Probability of staying in the same model per step.
    pub switch_self: f64,
    pub dt_track: f64,
    pub dt_predict: f64,
    /// Initial velocity variance (m²/s²).
    pub initial_velocity_var: f64,
}

impl Default for ImmConfig {
    fn default() -> Self {
        Self {
            switch_self: 0.95,
            dt_track: 0.1,
            dt_predict: 0.3,
            initial_velocity_var: 1.0,
        }
    }
}

impl ImmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.switch_self) {
            return Err(invalid("switch probability must lie in [0, 1]"));
        }
        if !(self.dt_track > 0.0 && self.dt_predict > 0.0 && self.initial_velocity_var > 0.0) {
            return Err(invalid("IMM time steps and initial variance must be positive"));
        }
        Ok(())
    }

    pub fn switch_matrix(&self) -> Matrix2<f64> {
        let s = self.switch_self;
        Matrix2::new(s, 1.0 - s, 1.0 - s, s)
    }
}

/// Continuous-time noise intensities: position random walk for CP and
/// white-noise acceleration for CV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessNoise {
    /// m²/s
    pub cp: f64,
    /// m²/s³
    pub cv: f64,
}

impl ProcessNoise {
    /// Estimates intensities from ground-truth tracks sampled every `dt`:
    /// Var(Δp) = q_cp·dt and Var(Δ²p) = ⅔·q_cv·dt³.
    pub fn estimate(tracks: &[Vec<[f64; 2]>], dt: f64) -> Result<Self> {
        let mut d1 = Vec::new();
        let mut d2 = Vec::new();
        for t in tracks {
            for w in t.windows(2) {
                d1.extend([w[1][0] - w[0][0], w[1][1] - w[0][1]]);
            }
            for w in t.windows(3) {
                d2.extend([w[2][0] - 2.0 * w[1][0] + w[0][0], w[2][1] - 2.0 * w[1][1] + w[0][1]]);
            }
        }
        if d2.len() < 2 {
            return Err(invalid("need tracks of at least three samples to estimate process noise"));
        }
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
        };
        Ok(Self {
            cp: var(&d1) / dt,
            cv: 1.5 * var(&d2) / dt.powi(3),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelState {
    pub x: Vector4<f64>,
    pub p: Matrix4<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImmState {
    /// CP then CV.
    pub models: [ModelState; 2],
    pub probs: [f64; 2],
    pub switch: Matrix2<f64>,
    pub noise: ProcessNoise,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianPrediction {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

fn transition(model: usize, dt: f64, noise: &ProcessNoise) -> (Matrix4<f64>, Matrix4<f64>) {
    let mut f = Matrix4::identity();
    let mut q = Matrix4::zeros();
    if model == CP {
        f[(2, 2)] = 0.0;
        f[(3, 3)] = 0.0;
        q[(0, 0)] = noise.cp * dt;
        q[(1, 1)] = noise.cp * dt;
        q[(2, 2)] = CP_VELOCITY_VAR;
        q[(3, 3)] = CP_VELOCITY_VAR;
    } else {
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;
        let (a, b, c) = (dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt);
        for k in 0..2 {
            q[(k, k)] = noise.cv * a;
            q[(k, k + 2)] = noise.cv * b;
            q[(k + 2, k)] = noise.cv * b;
            q[(k + 2, k + 2)] = noise.cv * c;
        }
    }
    (f, q)
}

fn observation() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

fn predict_model(s: &ModelState, model: usize, dt: f64, noise: &ProcessNoise) -> ModelState {
    let (f, q) = transition(model, dt, noise);
    let p = f * s.p * f.transpose() + q;
    ModelState {
        x: f * s.x,
        p: 0.5 * (p + p.transpose()),
    }
}

/// One Kalman predict + update for a single model; returns the posterior
/// and the log-likelihood of the innovation.
pub fn kalman_step(s: &ModelState, model: usize, dt: f64, noise: &ProcessNoise, z: [f64; 2]) -> Result<(ModelState, f64)> {
    let pred = predict_model(s, model, dt, noise);
    let h = observation();
    let r = Matrix2::identity() * OBSERVATION_NOISE;
    let nu = Vector2::new(z[0], z[1]) - h * pred.x;
    let sm = h * pred.p * h.transpose() + r;
    let chol = sm.cholesky().ok_or(Error::SingularInnovation { model })?;
    let sinv = chol.inverse();
    let k = pred.p * h.transpose() * sinv;
    let ikh = Matrix4::identity() - k * h;
    let p = ikh * pred.p * ikh.transpose() + k * r * k.transpose();
    let l = chol.l();
    let log_det = 2.0 * (l[(0, 0)].ln() + l[(1, 1)].ln());
    let maha = (nu.transpose() * sinv * nu)[(0, 0)];
    let ll = -0.5 * (maha + log_det) - std::f64::consts::LN_2 - std::f64::consts::PI.ln();
    Ok((
        ModelState {
            x: pred.x + k * nu,
            p: 0.5 * (p + p.transpose()),
        },
        ll,
    ))
}

impl ImmState {
    /// Starts at `z` with zero velocity and equal model probabilities.
    pub fn new(z: [f64; 2], cfg: &ImmConfig, noise: ProcessNoise) -> Result<Self> {
        cfg.validate()?;
        let x = Vector4::new(z[0], z[1], 0.0, 0.0);
        let p = Matrix4::from_diagonal(&Vector4::new(
            OBSERVATION_NOISE,
            OBSERVATION_NOISE,
            cfg.initial_velocity_var,
            cfg.initial_velocity_var,
        ));
        let mut cp = ModelState { x, p };
        cp.p[(2, 2)] = CP_VELOCITY_VAR;
        cp.p[(3, 3)] = CP_VELOCITY_VAR;
        Ok(Self {
            models: [cp, ModelState { x, p }],
            probs: [0.5, 0.5],
            switch: cfg.switch_matrix(),
            noise,
        })
    }

    /// One IMM cycle: mixing, per-model Kalman step, probability update.
    pub fn update(&self, z: [f64; 2], dt: f64) -> Result<Self> {
        let pi = &self.switch;
        let mut c = [0.0; 2];
        for j in 0..2 {
            c[j] = (0..2).map(|i| pi[(i, j)] * self.probs[i]).sum();
        }
        let mut next = self.clone();
        let mut log_w = [0.0; 2];
        for j in 0..2 {
            let mut x0 = Vector4::zeros();
            let mut mix = [0.0; 2];
            for i in 0..2 {
                mix[i] = if c[j] > 0.0 { pi[(i, j)] * self.probs[i] / c[j] } else { 0.0 };
                x0 += mix[i] * self.models[i].x;
            }
            let mut p0 = Matrix4::zeros();
            for i in 0..2 {
                let d = self.models[i].x - x0;
                p0 += mix[i] * (self.models[i].p + d * d.transpose());
            }
            let (post, ll) = kalman_step(&ModelState { x: x0, p: p0 }, j, dt, &self.noise, z)?;
            next.models[j] = post;
            log_w[j] = if c[j] > 0.0 { c[j].ln() + ll } else { f64::NEG_INFINITY };
        }
        let m = log_w[0].max(log_w[1]);
        let e = [(log_w[0] - m).exp(), (log_w[1] - m).exp()];
        let s = e[0] + e[1];
        next.probs = [e[0] / s, e[1] / s];
        Ok(next)
    }

    /// Filters a sequence of observations spaced `cfg.dt_track` apart.
    pub fn track(observations: &[[f64; 2]], cfg: &ImmConfig, noise: ProcessNoise) -> Result<Self> {
        let (first, rest) = observations.split_first().ok_or_else(|| invalid("no observations"))?;
        let mut s = Self::new(*first, cfg, noise)?;
        for z in rest {
            s = s.update(*z, cfg.dt_track)?;
        }
        Ok(s)
    }

    /// Moment-matched position distribution of the current mixture.
    pub fn position(&self) -> GaussianPrediction {
        moment_match(&self.models, &self.probs)
    }

    /// Open-loop predictions for steps `dt, 2·dt, …, T·dt`.
    pub fn predict(&self, steps: usize, dt: f64) -> Vec<GaussianPrediction> {
        let mut models = self.models;
        (0..steps)
            .map(|_| {
                for (j, m) in models.iter_mut().enumerate() {
                    *m = predict_model(m, j, dt, &self.noise);
                }
                moment_match(&models, &self.probs)
            })
            .collect()
    }

    pub fn cv_probability(&self) -> f64 {
        self.probs[CV]
    }

    pub fn cp_probability(&self) -> f64 {
        self.probs[CP]
    }
}

fn moment_match(models: &[ModelState; 2], probs: &[f64; 2]) -> GaussianPrediction {
    let mut mean = Vector2::zeros();
    for (m, p) in models.iter().zip(probs) {
        mean += *p * m.x.fixed_rows::<2>(0);
    }
    let mut cov = Matrix2::zeros();
    for (m, p) in models.iter().zip(probs) {
        let d = m.x.fixed_rows::<2>(0) - mean;
        cov += *p * (m.p.fixed_view::<2, 2>(0, 0) + d * d.transpose());
    }
    GaussianPrediction {
        mean: [mean[0], mean[1]],
        cov: [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
    }
}

/// Limit of the quadrature window around the marginal mean, in σ.
const TAIL_SIGMAS: f64 = 8.0;
const QUAD_PANELS: usize = 16;
const QUAD_ORDER: usize = 20;

/// Probability of the disk of the given area centered at `center`.
///
/// Integrates the conditional normal over each vertical chord, with the
/// substitution x = cx + R·sin t and the range clipped to ±8σ of the
/// x-marginal.
pub fn prob_in_circle(g: &GaussianPrediction, center: [f64; 2], area: f64) -> Result<f64> {
    if !(area > 0.0) {
        return Err(invalid(format!("circle area must be positive, got {area}")));
    }
    let radius = (area / std::f64::consts::PI).sqrt();
    let [[sxx, sxy], [_, syy]] = g.cov;
    if !(sxx > 0.0 && syy > 0.0 && sxx * syy - sxy * sxy >= 0.0) {
        return Err(invalid("prediction covariance is not positive definite"));
    }
    let sx = sxx.sqrt();
    let slope = sxy / sxx;
    let cond_sd = (syy - sxy * sxy / sxx).max(0.0).sqrt();
    let lo = ((g.mean[0] - TAIL_SIGMAS * sx - center[0]) / radius).clamp(-1.0, 1.0).asin();
    let hi = ((g.mean[0] + TAIL_SIGMAS * sx - center[0]) / radius).clamp(-1.0, 1.0).asin();
    if hi <= lo {
        return Ok(0.0);
    }
    let quad = GaussLegendre::new(QUAD_ORDER).map_err(|e| invalid(e.to_string()))?;
    let integrand = |t: f64| {
        let x = center[0] + radius * t.sin();
        let half = radius * t.cos();
        let zx = (x - g.mean[0]) / sx;
        let px = (-0.5 * zx * zx).exp() / (sx * (2.0 * std::f64::consts::PI).sqrt());
        let my = g.mean[1] + slope * (x - g.mean[0]);
        let (a, b) = (center[1] - half - my, center[1] + half - my);
        let py = if cond_sd > 0.0 {
            let r = std::f64::consts::SQRT_2 * cond_sd;
            0.5 * (libm::erf(b / r) - libm::erf(a / r))
        } else if a <= 0.0 && 0.0 <= b {
            1.0
        } else {
            0.0
        };
        px * py * radius * t.cos()
    };
    let width = (hi - lo) / QUAD_PANELS as f64;
    let total: f64 = (0..QUAD_PANELS)
        .map(|k| {
            let a = lo + k as f64 * width;
            quad.integrate(a, a + width, integrand)
        })
        .sum();
    Ok(total.clamp(0.0, 1.0))
}
