//! Acceptance suite: one PASS/FAIL line per criterion. Run a subset with
//! `cargo test --test acceptance -- 5 8`.

mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use gridplan::baseline_imm::{ImmConfig, ProcessNoise};
use gridplan::gridworld::StateGrid;
use gridplan::mixture::{activate, discretize, MixtureParams, NllMode};
use gridplan::planner::{fwdbwd_predict, mdp_predict, policy_from_values};
use gridplan::recurrent::RmdnConfig;
use gridplan::scenariolab::*;
use gridplan::topology::TopologyConfig;
use gridplan::training::*;
use ndgraph::{check_gradients, GradCheckOptions, Graph, Inputs, NodeId, ParamStore, Reduce, Tensor};
use rand_chacha::ChaCha8Rng;
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- 1

fn weighted(g: &mut Graph, rng: &mut ChaCha8Rng, y: NodeId) -> NodeId {
    let c = g.constant(random_tensor(rng, &g.shape(y).to_vec(), -1.0, 1.0));
    let p = g.mul(y, c).unwrap();
    g.sum(p).unwrap()
}

fn worst_of(g: &Graph, params: &[(&str, Tensor)], loss: NodeId) -> f64 {
    let mut ps = ParamStore::new();
    for (n, t) in params {
        ps.insert(*n, t.clone());
    }
    check_gradients(g, &ps, &Inputs::new(), loss, &GradCheckOptions::default()).unwrap().worst()
}

/// Unary, broadcast binary, scale and offset.
fn elementwise_worst() -> f64 {
    let mut rng = rng(100);
    let mut worst: f64 = 0.0;
    let unary: [(&str, f64, f64); 8] = [
        ("neg", -2.0, 2.0),
        ("exp", -2.0, 2.0),
        ("tanh", -2.0, 2.0),
        ("sigmoid", -2.0, 2.0),
        ("cos", -2.0, 2.0),
        ("log_cosh", -2.0, 2.0),
        ("log", 0.2, 2.0),
        ("log_bessel_i0", 0.1, 40.0),
    ];
    for (name, lo, hi) in unary {
        let mut g = Graph::new();
        let x = g.param("x", &[2, 5]).unwrap();
        let y = g.apply(name, &[x], None).unwrap();
        let loss = weighted(&mut g, &mut rng, y);
        let x0 = random_tensor(&mut rng, &[2, 5], lo, hi);
        worst = worst.max(worst_of(&g, &[("x", x0)], loss));
    }
    for name in ["add", "sub", "mul", "div"] {
        let mut g = Graph::new();
        let a = g.param("a", &[2, 3, 4]).unwrap();
        let b = g.param("b", &[3, 1]).unwrap();
        let y = g.apply(name, &[a, b], None).unwrap();
        let y = g.scale(y, -1.3).unwrap();
        let y = g.offset(y, 0.4).unwrap();
        let loss = weighted(&mut g, &mut rng, y);
        let a0 = random_tensor(&mut rng, &[2, 3, 4], -2.0, 2.0);
        let b0 = random_tensor(&mut rng, &[3, 1], 0.5, 2.0);
        worst = worst.max(worst_of(&g, &[("a", a0), ("b", b0)], loss));
    }
    worst
}

/// Linear algebra, shape, reduction and convolution operators.
fn structural_worst() -> f64 {
    let mut rng = rng(101);
    let mut worst: f64 = 0.0;

    let mut g = Graph::new();
    let w = g.param("w", &[4, 6]).unwrap();
    let b = g.param("b", &[4]).unwrap();
    let u = g.param("u", &[2]).unwrap();
    let v = g.param("v", &[4]).unwrap();
    let x = g.concat(&[u, v], 0).unwrap();
    let y = g.affine(w, x, b).unwrap();
    let z = g.matvec(w, x).unwrap();
    let m = g.reshape(y, &[2, 2]).unwrap();
    let col = g.slice(m, 1, 1, 1).unwrap();
    let wide = g.broadcast_to(col, &[2, 3]).unwrap();
    let terms = [
        weighted(&mut g, &mut rng, z),
        weighted(&mut g, &mut rng, wide),
        weighted(&mut g, &mut rng, y),
    ];
    let loss = g.add_all(&terms).unwrap();
    let ps: Vec<(&str, Tensor)> = [("w", vec![4, 6]), ("b", vec![4]), ("u", vec![2]), ("v", vec![4])]
        .into_iter()
        .map(|(n, s)| (n, random_tensor(&mut rng, &s, -2.0, 2.0)))
        .collect();
    worst = worst.max(worst_of(&g, &ps, loss));

    for axis in 0..3 {
        let mut g = Graph::new();
        let x = g.param("x", &[3, 4, 2]).unwrap();
        let outs = [
            g.softmax(x, axis).unwrap(),
            g.logsumexp(x, axis).unwrap(),
            g.max_axis(x, axis).unwrap(),
            g.reduce(Reduce::Min, x, axis).unwrap(),
            g.reduce(Reduce::Mean, x, axis).unwrap(),
            g.sum_axis(x, axis).unwrap(),
        ];
        let mut terms: Vec<NodeId> = outs.into_iter().map(|t| weighted(&mut g, &mut rng, t)).collect();
        terms.push(g.min(x).unwrap());
        terms.push(g.mean(x).unwrap());
        terms.push(g.reduce_all(Reduce::Max, x).unwrap());
        let loss = g.add_all(&terms).unwrap();
        let x0 = random_tensor(&mut rng, &[3, 4, 2], -2.0, 2.0);
        worst = worst.max(worst_of(&g, &[("x", x0)], loss));
    }

    let mut g = Graph::new();
    let x = g.param("x", &[2, 5, 5]).unwrap();
    let k = g.param("k", &[3, 2, 3, 3]).unwrap();
    let kf = g.flip2d(k).unwrap();
    let y1 = g.conv2d(x, k).unwrap();
    let y2 = g.conv2d(x, kf).unwrap();
    let terms = [weighted(&mut g, &mut rng, y1), weighted(&mut g, &mut rng, y2)];
    let loss = g.add_all(&terms).unwrap();
    let x0 = random_tensor(&mut rng, &[2, 5, 5], -2.0, 2.0);
    let k0 = random_tensor(&mut rng, &[3, 2, 3, 3], -2.0, 2.0);
    worst.max(worst_of(&g, &[("x", x0), ("k", k0)], loss))
}

fn criterion_1() -> Verdict {
    let elem = elementwise_worst();
    let ops = structural_worst();
    let mdp = joint_gradcheck(PlannerKind::Mdp, false);
    let fb = joint_gradcheck(PlannerKind::Fwdbwd, false);
    verdict(
        elem < 1e-5 && ops < 1e-4 && mdp < 1e-4 && fb < 1e-4,
        format!(
            "elementwise max rel err {elem:.2e} (< 1e-5); other ops {ops:.2e}, joint micro pipeline mdp {mdp:.2e}, fwdbwd {fb:.2e} (< 1e-4)"
        ),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Verdict {
    let vi = (0..5).map(vi_vs_tabular).fold(0.0, f64::max);
    let mdp = (0..5).map(mdp_vs_dense).fold(0.0, f64::max);
    let fb = (0..3).map(fwdbwd_vs_paths).fold(0.0, f64::max);
    verdict(
        vi < 1e-9 && mdp < 1e-12 && fb < 1e-9,
        format!("VI vs tabular {vi:.2e} (< 1e-9), mdp vs dense chain {mdp:.2e} (< 1e-12), fwdbwd vs paths {fb:.2e} (< 1e-9)"),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Verdict {
    let mut rng = rng(300);
    let (mut kern, mut pred, mut disc, mut pol): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let cases = 1000;
    for _ in 0..cases {
        let sp = spec(6, 5);
        let filters = random_filters(&mut rng, 9, 3);
        for a in 0..9 {
            kern = kern.max((filters.kernel(a).iter().sum::<f64>() - 1.0).abs());
        }
        let q = random_tensor(&mut rng, &[9, 5, 6], -30.0, 30.0);
        let policy = policy_from_values(&q, sp, rng.random_range(0.05..5.0)).unwrap();
        for c in 0..sp.cells() {
            let s: f64 = (0..9).map(|a| policy.weights.data()[a * sp.cells() + c]).sum();
            pol = pol.max((s - 1.0).abs());
        }
        let start = random_state(&mut rng, sp);
        let dest = random_state(&mut rng, sp);
        let steps = rng.random_range(1..6);
        let mut grids: Vec<StateGrid> = mdp_predict(&start, &policy, &filters, steps).unwrap().grids;
        grids.extend(fwdbwd_predict(&start, &dest, &filters, &policy.weights, None, steps).unwrap().grids);
        for g in &grids {
            pred = pred.max((g.mass() - 1.0).abs());
        }
        let raw: Vec<f64> = (0..24).map(|_| rng.random_range(-4.0..4.0)).collect();
        let mix = activate(&raw).unwrap();
        let d = discretize(&mix, spec(7, 6), rng.random_range(1..9)).unwrap();
        disc = disc.max((d.total() - 1.0).abs());
    }
    verdict(
        kern < 1e-12 && pred < 1e-9 && disc < 1e-9 && pol < 1e-12,
        format!(
            "{cases} cases: kernels {kern:.1e} (< 1e-12), prediction grids {pred:.1e} (< 1e-9), discretized {disc:.1e} (< 1e-9), policies {pol:.1e} (< 1e-12)"
        ),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Verdict {
    let quad = (0..4).map(mixture_quadrature_error).fold(0.0, f64::max);
    let i0 = i0_worst_relative_error();
    verdict(
        quad < 1e-3 && i0 < 1e-8,
        format!("density integral |1 - I| {quad:.2e} (< 1e-3), I0 relative error {i0:.2e} on (0, 100] (< 1e-8)"),
    )
}

// ------------------------------------------------- experiment helpers

fn windows(scenarios: &[&Scenario], wc: &WindowConfig) -> Vec<Sample> {
    scenarios
        .iter()
        .flat_map(|s| (0..s.tracks.len()).flat_map(|k| make_samples(s, k, wc, s.params.agent.rate_hz).unwrap()))
        .collect()
}

fn noise(scenarios: &[&Scenario]) -> ProcessNoise {
    let tracks: Vec<Vec<[f64; 2]>> = scenarios.iter().flat_map(|s| s.tracks.iter().map(|t| t.positions.clone())).collect();
    ProcessNoise::estimate(&tracks, 0.1).unwrap()
}

fn mean_at(rows: &[SummaryRow], predictor: &str, horizon: f64) -> f64 {
    rows.iter()
        .find(|r| r.predictor == predictor && (r.horizon_s - horizon).abs() < 1e-9)
        .map(|r| r.mean_prob_mass)
        .unwrap_or(f64::NAN)
}

fn rmdn(components: usize) -> RmdnConfig {
    RmdnConfig {
        components,
        hidden: 32,
        encoder_dim: 8,
        position_scale: 4.0,
        ..Default::default()
    }
}

struct Bimodal {
    train: Vec<Sample>,
    test: Vec<Sample>,
    noise: ProcessNoise,
    wc: WindowConfig,
}

/// Junction worlds: every agent walks up the stem and turns left or right.
fn bimodal() -> Bimodal {
    let params = ScenarioParams {
        kind: WorldKind::Junction,
        width: 32,
        height: 32,
        tracks: 20,
        noise_temp: 0.1,
        ..Default::default()
    };
    let data = generate_dataset(5, 10, &params).unwrap();
    let (tr, te) = split(&data);
    let wc = WindowConfig {
        width: 32,
        height: 32,
        per_track: 1,
        ..Default::default()
    };
    Bimodal {
        train: windows(&tr, &wc),
        test: windows(&te, &wc),
        noise: noise(&tr),
        wc,
    }
}

fn destination_model(b: &Bimodal, components: usize, horizon: usize, mode: NllMode, dropout: f64) -> ModelBundle {
    let cfg = ModelConfig {
        rmdn: rmdn(components),
        window: b.wc.clone(),
        dest_horizon: horizon,
        ..Default::default()
    };
    let mut bundle = ModelBundle::init(cfg, 1).unwrap();
    let tc = TrainConfig {
        mode: TrainMode::Dest,
        epochs: 30,
        learning_rate: 3e-3,
        batch_size: 16,
        nll_mode: mode,
        dropout,
        ..Default::default()
    };
    train(&b.train, &mut bundle, &tc, None).unwrap();
    bundle
}

// ---------------------------------------------------------------- 5

fn criterion_5(b: &Bimodal) -> Verdict {
    let clock = Instant::now();
    let mut models = Vec::new();
    for h in [10, 20, 30] {
        models.push((PredictorKind::Rmdn, destination_model(b, 8, h, NllMode::Mean, 0.0)));
        models.push((PredictorKind::Rdn, destination_model(b, 1, h, NllMode::Mean, 0.0)));
    }
    let train_s = clock.elapsed().as_secs_f64();
    let pairs: Vec<(PredictorKind, &ModelBundle)> = models.iter().map(|(k, m)| (*k, m)).collect();
    let rows = evaluate_predictors(&b.test, &pairs, Some((ImmConfig::default(), b.noise, vec![10, 20, 30])), 10.0, CIRCLE_AREA).unwrap();
    let s = summarize(&rows);
    let mut pass = train_s <= 900.0;
    let mut parts = Vec::new();
    for h in [1.0, 2.0, 3.0] {
        let (r, d, i) = (mean_at(&s, "rmdn", h), mean_at(&s, "rdn", h), mean_at(&s, "imm", h));
        pass &= r > d && r > i;
        parts.push(format!("{h:.0}s rmdn {r:.4} rdn {d:.4} imm {i:.4}"));
    }
    verdict(pass, format!("{}; {} test windows; training {train_s:.0} s (<= 900 s)", parts.join(", "), b.test.len()))
}

// ---------------------------------------------------------------- 8

fn big_components(m: &MixtureParams) -> Vec<[f64; 2]> {
    m.components.iter().filter(|c| c.pi > 0.05).map(|c| c.mu).collect()
}

fn criterion_8(b: &Bimodal) -> Verdict {
    let h = 30;
    let stats = |bundle: &ModelBundle| {
        let mut min_count = usize::MAX;
        let mut mean_count = 0.0;
        let mut both_sides = 0;
        for s in &b.test {
            let mus = big_components(&predict(bundle, s).unwrap().mixture);
            min_count = min_count.min(mus.len());
            mean_count += mus.len() as f64 / b.test.len() as f64;
            if mus.iter().any(|m| m[0] < 0.0) && mus.iter().any(|m| m[0] > 0.0) {
                both_sides += 1;
            }
        }
        (min_count, mean_count, both_sides)
    };
    let min_model = destination_model(b, 8, h, NllMode::Min, 0.5);
    let (lo, avg, sides) = stats(&min_model);
    let mean_model = destination_model(b, 8, h, NllMode::Mean, 0.0);
    let (mlo, mavg, msides) = stats(&mean_model);
    let n = b.test.len();
    verdict(
        lo >= 2,
        format!(
            "min mode: >= {lo} components with pi > 0.05 on every test window (mean {avg:.1}), both branches covered on {sides}/{n}; \
             mean mode (recorded): >= {mlo} (mean {mavg:.1}), both branches on {msides}/{n}"
        ),
    )
}

// ---------------------------------------------------------------- 6, 7

struct Planners {
    models: Vec<(PredictorKind, ModelBundle)>,
    train_s: f64,
}

fn planner_models(kind: WorldKind, scenarios: usize) -> (Planners, Vec<Sample>, ProcessNoise) {
    let params = ScenarioParams {
        kind,
        width: 32,
        height: 32,
        tracks: 20,
        noise_temp: 0.1,
        min_path: 16,
        ..Default::default()
    };
    let data = generate_dataset(7, scenarios, &params).unwrap();
    let (tr, te) = split(&data);
    let wc = WindowConfig {
        width: 32,
        height: 32,
        per_track: 1,
        ..Default::default()
    };
    let train_set = windows(&tr, &wc);
    let clock = Instant::now();
    let mut models = Vec::new();
    for (kind, planner) in [(PredictorKind::Mdp, PlannerKind::Mdp), (PredictorKind::Fwdbwd, PlannerKind::Fwdbwd)] {
        let cfg = ModelConfig {
            rmdn: rmdn(8),
            topology: TopologyConfig {
                layers: 2,
                kernel: 3,
                hidden: 8,
            },
            planner,
            window: wc.clone(),
            filter_init: FilterInit::Moves,
            ..Default::default()
        };
        let mut bundle = ModelBundle::init(cfg, 1).unwrap();
        let dest = TrainConfig {
            mode: TrainMode::Dest,
            epochs: 20,
            learning_rate: 3e-3,
            ..Default::default()
        };
        train(&train_set, &mut bundle, &dest, None).unwrap();
        let joint = TrainConfig {
            mode: TrainMode::Joint,
            epochs: 20,
            learning_rate: 3e-3,
            w_dest: 0.1,
            ..Default::default()
        };
        train(&train_set, &mut bundle, &joint, None).unwrap();
        models.push((kind, bundle));
    }
    let train_s = clock.elapsed().as_secs_f64();
    (Planners { models, train_s }, windows(&te, &wc), noise(&tr))
}

fn criterion_6(p: &Planners, test: &[Sample], noise: ProcessNoise) -> Verdict {
    let clock = Instant::now();
    let pairs: Vec<(PredictorKind, &ModelBundle)> = p.models.iter().map(|(k, m)| (*k, m)).collect();
    let horizons: Vec<usize> = (1..=10).map(|k| 3 * k).collect();
    let rows = evaluate_predictors(test, &pairs, Some((ImmConfig::default(), noise, horizons)), 10.0, CIRCLE_AREA).unwrap();
    let s = summarize(&rows);
    let mut pass = true;
    let mut long = Vec::new();
    let mut short = Vec::new();
    for k in 1..=10 {
        let h = 0.3 * k as f64;
        let (m, f, i) = (mean_at(&s, "mdp", h), mean_at(&s, "fwdbwd", h), mean_at(&s, "imm", h));
        let line = format!("{h:.1}s mdp {m:.4} fwdbwd {f:.4} imm {i:.4}");
        if h >= 2.0 {
            pass &= m > i && f > i;
            long.push(line);
        } else if k % 3 == 0 {
            short.push(line);
        }
    }
    let total = p.train_s + clock.elapsed().as_secs_f64();
    pass &= total <= 1800.0;
    verdict(
        pass,
        format!(
            ">= 2 s: {}; informational: {}; {} test windows; run {total:.0} s (<= 1800 s)",
            long.join(", "),
            short.join(", "),
            test.len()
        ),
    )
}

fn obstacle_hits(p: &Planners, test: &[Sample]) -> Vec<(PredictorKind, usize, usize)> {
    p.models
        .iter()
        .map(|(kind, m)| {
            let (mut hits, mut steps) = (0, 0);
            for s in test {
                for g in &predict(m, s).unwrap().stack.grids {
                    let (i, j) = g.argmax();
                    steps += 1;
                    if s.features.is_obstacle(i, j) {
                        hits += 1;
                    }
                }
            }
            (*kind, hits, steps)
        })
        .collect()
}

fn criterion_7(random_world: Option<&Planners>) -> Verdict {
    let (p, test, _) = planner_models(WorldKind::Detour, 10);
    let hits = obstacle_hits(&p, &test);
    let pass = !test.is_empty() && hits.iter().all(|h| h.1 == 0);
    let fmt = |hits: &[(PredictorKind, usize, usize)]| {
        hits.iter().map(|(k, h, n)| format!("{k} {h}/{n}")).collect::<Vec<_>>().join(", ")
    };
    let mut detail = format!(
        "trained on detour worlds, {} held-out windows with a block between start and goal: argmax cells on obstacles {}",
        test.len(),
        fmt(&hits)
    );
    if let Some(r) = random_world {
        detail += &format!("; random-world models on the same windows (recorded): {}", fmt(&obstacle_hits(r, &test)));
    }
    verdict(pass, detail)
}

// ---------------------------------------------------------------- 9

fn pipeline_run(dir: &Path) -> (Vec<(String, Vec<u8>)>, TrainReport) {
    let params = ScenarioParams {
        width: 24,
        height: 24,
        tracks: 4,
        min_path: 10,
        margin: 2,
        ..Default::default()
    };
    let data_dir = dir.join("data");
    write_dataset(&data_dir, &generate_dataset(3, 5, &params).unwrap()).unwrap();
    let data = read_dataset(&data_dir).unwrap();
    let (tr, te) = split(&data);
    let cfg = ModelConfig {
        rmdn: RmdnConfig {
            components: 3,
            hidden: 6,
            encoder_dim: 3,
            position_scale: 2.0,
            ..Default::default()
        },
        topology: TopologyConfig {
            layers: 2,
            kernel: 3,
            hidden: 3,
        },
        window: WindowConfig {
            history: 10,
            future: 9,
            width: 12,
            height: 12,
            per_track: 2,
            ..Default::default()
        },
        theta_bins: 4,
        ..Default::default()
    };
    let wc = cfg.window.clone();
    let mut bundle = ModelBundle::init(cfg, 3).unwrap();
    let tc = TrainConfig {
        epochs: 3,
        batch_size: 3,
        dropout: 0.25,
        seed: 3,
        ..Default::default()
    };
    let run_dir = dir.join("run");
    let report = train(&windows(&tr, &wc), &mut bundle, &tc, Some(&run_dir)).unwrap();
    bundle.save(&run_dir).unwrap();
    let rows = evaluate_predictors(
        &windows(&te, &wc),
        &[(PredictorKind::Rmdn, &bundle), (PredictorKind::Fwdbwd, &bundle)],
        Some((ImmConfig::default(), noise(&tr), vec![3, 6, 9])),
        10.0,
        CIRCLE_AREA,
    )
    .unwrap();
    write_eval_csv(dir.join("eval.csv"), &rows).unwrap();
    write_summary_csv(dir.join("summary.csv"), &summarize(&rows)).unwrap();
    let mut files = Vec::new();
    for sub in [data_dir.as_path(), run_dir.as_path(), dir] {
        let mut names: Vec<_> = fs::read_dir(sub).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_file()).collect();
        names.sort();
        for p in names {
            // The report carries wall-clock seconds, compared separately.
            if p.file_name().unwrap() != REPORT_FILE {
                files.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    (files, report)
}

fn criterion_9() -> Verdict {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (fa, ra) = pipeline_run(a.path());
    let (fb, rb) = pipeline_run(b.path());
    let same_files = fa == fb;
    let same_losses = ra.same_losses(&rb);
    verdict(
        same_files && same_losses,
        format!(
            "{} artifact files (dataset, checkpoints, model, eval and summary CSV) bitwise identical: {same_files}; \
             epoch losses identical: {same_losses}",
            fa.len()
        ),
    )
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |k: usize| wanted.is_empty() || wanted.contains(&k);
    let mut results: Vec<(usize, &str, Verdict, f64)> = Vec::new();
    let mut record = |k: usize, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let clock = Instant::now();
        let v = f();
        let secs = clock.elapsed().as_secs_f64();
        println!("criterion {k} {}: {name} | {} | {secs:.1} s", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((k, name, v, secs));
    };
    if run(1) {
        record(1, "gradient integrity", &mut criterion_1);
    }
    if run(2) {
        record(2, "planner oracle equivalence", &mut criterion_2);
    }
    if run(3) {
        record(3, "probability hygiene", &mut criterion_3);
    }
    if run(4) {
        record(4, "mixture math", &mut criterion_4);
    }
    if run(5) || run(8) {
        let b = bimodal();
        if run(5) {
            record(5, "destination experiment", &mut || criterion_5(&b));
        }
        if run(8) {
            record(8, "min-batch loss effect", &mut || criterion_8(&b));
        }
    }
    let mut random_world = None;
    if run(6) {
        let (p, test, noise) = planner_models(WorldKind::Random, 20);
        record(6, "trajectory experiment", &mut || criterion_6(&p, &test, noise));
        random_world = Some(p);
    }
    if run(7) {
        record(7, "obstacle avoidance", &mut || criterion_7(random_world.as_ref()));
    }
    if run(9) {
        record(9, "determinism", &mut criterion_9);
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!(", failed: {failed:?}") }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
