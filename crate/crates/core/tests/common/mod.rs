//! Independent reference computations shared by the oracle suites and the
//! acceptance target. Each returns the largest deviation it observed.
#![allow(dead_code, clippy::needless_range_loop)]

use gauss_quad::GaussLegendre;
use gridplan::gridworld::{filters_from_weights, GridSpec, StateGrid, TransitionFilters, MOVES};
use gridplan::mixture::{Component, MixtureParams};
use gridplan::planner::{fwdbwd_predict, mdp_predict, policy_from_values, value_iteration, PolicyMap, ValueIterationConfig};
use gridplan::recurrent::RmdnConfig;
use gridplan::scenariolab::{generate_scenario, make_samples, Sample, ScenarioParams, WindowConfig};
use gridplan::topology::TopologyConfig;
use gridplan::training::{FilterInit, LossWeights, ModelBundle, ModelConfig, Pipeline, PlannerKind};
use ndgraph::{check_gradients, GradCheckOptions, Tensor};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn spec(w: usize, h: usize) -> GridSpec {
    GridSpec::new(w, h, 0.25, [0.0, 0.0]).unwrap()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub fn random_filters(rng: &mut ChaCha8Rng, m: usize, k: usize) -> TransitionFilters {
    filters_from_weights(random_tensor(rng, &[m, k, k], -2.0, 2.0)).unwrap()
}

/// Per-cell action distributions from random logits.
pub fn random_policy(rng: &mut ChaCha8Rng, m: usize, spec: GridSpec) -> PolicyMap {
    let q = random_tensor(rng, &[m, spec.height, spec.width], -2.0, 2.0);
    policy_from_values(&q, spec, 1.0).unwrap()
}

pub fn random_state(rng: &mut ChaCha8Rng, spec: GridSpec) -> StateGrid {
    let v = (0..spec.cells()).map(|_| rng.random_range(0.0..1.0)).collect();
    StateGrid::new(spec, v).unwrap().normalized().unwrap()
}

/// Row-stochastic-or-less matrix P[s][s'] of one policy-weighted step.
pub fn dense_transition(spec: GridSpec, filters: &TransitionFilters, weights: &Tensor) -> Vec<Vec<f64>> {
    let (w, h, k) = (spec.width as i64, spec.height as i64, filters.size() as i64);
    let n = spec.cells();
    let c = k / 2;
    let mut p = vec![vec![0.0; n]; n];
    for a in 0..filters.actions() {
        let kern = filters.kernel(a);
        for j in 0..h {
            for i in 0..w {
                let s = (j * w + i) as usize;
                let wa = weights.data()[a * n + s];
                for dy in 0..k {
                    for dx in 0..k {
                        let (x, y) = (i + dx - c, j + dy - c);
                        if x >= 0 && x < w && y >= 0 && y < h {
                            p[s][(y * w + x) as usize] += wa * kern[(dy * k + dx) as usize];
                        }
                    }
                }
            }
        }
    }
    p
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Convolutional value iteration against a per-cell Bellman backup on a
/// deterministic 8×8 instance (one-hot move kernels, leaving the grid is worth 0).
pub fn vi_vs_tabular(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let sp = spec(8, 8);
    let filters = TransitionFilters::shifts(3).unwrap();
    let m = MOVES.len();
    let reward = random_tensor(&mut rng, &[m, 8, 8], -1.0, 0.5);
    let cfg = ValueIterationConfig {
        gamma: 0.9,
        iterations: 40,
        temperature: 0.1,
    };
    let vm = value_iteration(&reward, &filters, sp, &cfg).unwrap();
    let n = sp.cells();
    let mut v = vec![0.0; n];
    for _ in 0..cfg.iterations {
        let mut next = vec![f64::NEG_INFINITY; n];
        for j in 0..8i64 {
            for i in 0..8i64 {
                let s = (j * 8 + i) as usize;
                for (a, mv) in MOVES.iter().enumerate() {
                    let (x, y) = (i + mv[0], j + mv[1]);
                    let after = if (0..8).contains(&x) && (0..8).contains(&y) { v[(y * 8 + x) as usize] } else { 0.0 };
                    next[s] = next[s].max(reward.data()[a * n + s] + cfg.gamma * after);
                }
            }
        }
        v = next;
    }
    max_diff(&vm.values, &v)
}

/// Policy rollouts against powers of the dense Markov matrix on 6×6.
pub fn mdp_vs_dense(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let sp = spec(6, 6);
    let filters = random_filters(&mut rng, 9, 3);
    let policy = random_policy(&mut rng, 9, sp);
    let start = random_state(&mut rng, sp);
    let steps = 6;
    let stack = mdp_predict(&start, &policy, &filters, steps).unwrap();
    let p = dense_transition(sp, &filters, &policy.weights);
    let n = sp.cells();
    let mut x = start.values().to_vec();
    let mut worst: f64 = 0.0;
    for t in 0..steps {
        let mut y = vec![0.0; n];
        for s in 0..n {
            for d in 0..n {
                y[d] += x[s] * p[s][d];
            }
        }
        normalize(&mut y);
        worst = worst.max(max_diff(stack.grids[t].values(), &y));
        x = y;
    }
    worst
}

/// Bridge marginals against brute-force enumeration of every T-step path
/// on 5×5, T = 4.
pub fn fwdbwd_vs_paths(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let sp = spec(5, 5);
    let steps = 4;
    let filters = random_filters(&mut rng, 9, 3);
    let policy = random_policy(&mut rng, 9, sp);
    let start = random_state(&mut rng, sp);
    let dest = random_state(&mut rng, sp);
    let stack = fwdbwd_predict(&start, &dest, &filters, &policy.weights, None, steps).unwrap();
    let p = dense_transition(sp, &filters, &policy.weights);
    let n = sp.cells();
    let mut marg = vec![vec![0.0; n]; steps];
    fn walk(p: &[Vec<f64>], dest: &[f64], path: &mut Vec<usize>, w: f64, steps: usize, marg: &mut [Vec<f64>]) {
        if path.len() == steps + 1 {
            let w = w * dest[*path.last().unwrap()];
            for t in 1..=steps {
                marg[t - 1][path[t]] += w;
            }
            return;
        }
        let s = *path.last().unwrap();
        for d in 0..p.len() {
            if p[s][d] > 0.0 {
                path.push(d);
                walk(p, dest, path, w * p[s][d], steps, marg);
                path.pop();
            }
        }
    }
    for s0 in 0..n {
        let mut path = vec![s0];
        walk(&p, dest.values(), &mut path, start.values()[s0], steps, &mut marg);
    }
    let mut worst: f64 = 0.0;
    for t in 0..steps {
        normalize(&mut marg[t]);
        worst = worst.max(max_diff(stack.grids[t].values(), &marg[t]));
    }
    worst
}

pub fn random_component(rng: &mut ChaCha8Rng) -> Component {
    Component {
        pi: 1.0,
        mu: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        sigma: [rng.random_range(0.2..1.5), rng.random_range(0.2..1.5)],
        rho: rng.random_range(-0.9..0.9),
        gamma: rng.random_range(-PI..PI),
        kappa: rng.random_range(0.05..30.0),
    }
}

pub fn random_mixture(rng: &mut ChaCha8Rng, n: usize) -> MixtureParams {
    let mut components: Vec<Component> = (0..n).map(|_| random_component(rng)).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    for (c, r) in components.iter_mut().zip(&raw) {
        c.pi = r / s;
    }
    MixtureParams { components }
}

/// |∫∫∫ p(x, y, ψ) − 1| by tensor Gauss–Legendre over μ ± 9σ per component
/// box union and the full heading circle.
pub fn mixture_quadrature_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mix = random_mixture(&mut rng, 3);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for c in &mix.components {
        for d in 0..2 {
            lo[d] = lo[d].min(c.mu[d] - 9.0 * c.sigma[d]);
            hi[d] = hi[d].max(c.mu[d] + 9.0 * c.sigma[d]);
        }
    }
    // Split each axis so narrow components are resolved.
    let pieces = 12;
    let quad = GaussLegendre::new(24).unwrap();
    let heading = GaussLegendre::new(64).unwrap();
    let mut total = 0.0;
    for px in 0..pieces {
        let (ax, bx) = (lo[0] + (hi[0] - lo[0]) * px as f64 / pieces as f64, lo[0] + (hi[0] - lo[0]) * (px + 1) as f64 / pieces as f64);
        for py in 0..pieces {
            let (ay, by) = (lo[1] + (hi[1] - lo[1]) * py as f64 / pieces as f64, lo[1] + (hi[1] - lo[1]) * (py + 1) as f64 / pieces as f64);
            total += quad.integrate(ax, bx, |x| {
                quad.integrate(ay, by, |y| heading.integrate(-PI, PI, |psi| mix.log_density([x, y], psi).exp()))
            });
        }
    }
    (total - 1.0).abs()
}

/// The micro joint instance: 8×8 grid, two components, three planner steps,
/// five value-iteration sweeps.
pub fn micro_config(planner: PlannerKind, separate_backward: bool) -> ModelConfig {
    let window = WindowConfig {
        history: 4,
        future: 9,
        stride: 3,
        planner_every: 3,
        width: 8,
        height: 8,
        per_track: 1,
    };
    ModelConfig {
        rmdn: RmdnConfig {
            components: 2,
            hidden: 3,
            feature_dim: 4,
            encoder_dim: 2,
            position_scale: 1.0,
            mean_spread: 0.3,
        },
        topology: TopologyConfig {
            layers: 2,
            kernel: 3,
            hidden: 2,
        },
        planner,
        value_iteration: ValueIterationConfig {
            gamma: 0.9,
            iterations: 5,
            temperature: 0.5,
        },
        window,
        filter_init: FilterInit::Random,
        theta_bins: 4,
        separate_backward,
        ..Default::default()
    }
}

pub fn micro_sample(cfg: &ModelConfig) -> Sample {
    let params = ScenarioParams {
        width: 16,
        height: 16,
        obstacle_density: 0.05,
        tracks: 4,
        min_path: 8,
        margin: 2,
        ..Default::default()
    };
    for seed in 0.. {
        let sc = generate_scenario(0, seed, &params, 0).unwrap();
        for k in 0..sc.tracks.len() {
            if let Some(s) = make_samples(&sc, k, &cfg.window, 10.0).unwrap().into_iter().next() {
                return s;
            }
        }
    }
    unreachable!()
}

/// Worst relative finite-difference error over every parameter of the
/// compound loss on the micro instance.
pub fn joint_gradcheck(planner: PlannerKind, separate_backward: bool) -> f64 {
    let cfg = micro_config(planner, separate_backward);
    let bundle = ModelBundle::init(cfg.clone(), 3).unwrap();
    let sample = micro_sample(&cfg);
    let mut pipe = Pipeline::joint(&cfg).unwrap();
    let loss = pipe
        .total(&LossWeights {
            dest: 1.0,
            pred: 1.0,
            reg: 0.5,
        })
        .unwrap();
    let inputs = pipe.inputs(&sample, None).unwrap();
    let report = check_gradients(&pipe.graph, &bundle.params, &inputs, loss, &GradCheckOptions::default()).unwrap();
    report.worst()
}

/// I₀(p/q) from Σ (x²/4)^j / (j!)² in exact rational arithmetic, truncated
/// once a term drops below 1e-30 of the partial sum.
pub fn i0_exact(p: i64, q: i64) -> f64 {
    let x = BigRational::new(BigInt::from(p), BigInt::from(q));
    let quarter_x2 = &x * &x / BigRational::from_integer(BigInt::from(4));
    let tiny = BigRational::new(BigInt::one(), BigInt::from(10).pow(30));
    let mut term = BigRational::one();
    let mut sum = BigRational::zero();
    let mut j: u64 = 0;
    loop {
        sum += &term;
        j += 1;
        term = term * &quarter_x2 / BigRational::from_integer(BigInt::from(j * j));
        if j > 10 && term < &sum * &tiny {
            break;
        }
    }
    sum.to_f64().unwrap()
}

/// Worst relative error of the I₀ approximation on a grid over (0, 100].
pub fn i0_worst_relative_error() -> f64 {
    let mut points: Vec<(i64, i64)> = (1..=800).map(|k| (k, 8)).collect();
    points.extend([(1, 1000), (19_999, 1000), (20_001, 1000), (99_999, 1000)]);
    points
        .into_iter()
        .map(|(p, q)| {
            let exact = i0_exact(p, q);
            let approx = gridplan::mixture::log_bessel_i0(p as f64 / q as f64).unwrap().exp();
            ((approx - exact) / exact).abs()
        })
        .fold(0.0, f64::max)
}
