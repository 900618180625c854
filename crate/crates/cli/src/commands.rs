use std::fs;
use std::path::{Path, PathBuf};

use gridplan::baseline_imm::ProcessNoise;
use gridplan::gridworld::{write_grid_file, GridFile, GridFileKind};
use gridplan::planner::PolicyMap;
use gridplan::scenariolab::{
    generate_dataset, make_samples, read_dataset, split, summarize, write_dataset, write_eval_csv, write_summary_csv,
    Sample, Scenario, WindowConfig, MAP_PREFIX, SCENARIOS_FILE, TRACKS_FILE,
};
use gridplan::training::{evaluate_predictors, predict, train, ModelBundle, ModelConfig, PlannerKind, PredictorKind};
use serde::Serialize;

use crate::config::{RunConfig, CONFIG_COPY};
use crate::error::{CliError, Result};
use crate::render::{arrow_map, pgm};

pub const EVAL_FILE: &str = "eval.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

fn is_dataset_file(name: &str) -> bool {
    name == SCENARIOS_FILE
        || name == TRACKS_FILE
        || name == CONFIG_COPY
        || (name.starts_with(MAP_PREFIX) && name.ends_with(".map"))
}

pub fn gen_data(cfg: &RunConfig, out: &Path, force: bool) -> Result<()> {
    if out.exists() {
        let mut entries = fs::read_dir(out)?.peekable();
        if entries.peek().is_some() {
            if !force {
                return Err(CliError::Usage(format!(
                    "{} is not empty; pass --force to overwrite",
                    out.display()
                )));
            }
            for e in fs::read_dir(out)? {
                let e = e?;
                if e.file_type()?.is_file() && is_dataset_file(&e.file_name().to_string_lossy()) {
                    fs::remove_file(e.path())?;
                }
            }
        }
    }
    let data = generate_dataset(cfg.seed, cfg.scenarios, &cfg.data)?;
    write_dataset(out, &data)?;
    cfg.write_copy(out)?;
    let (tr, te) = split(&data);
    let tracks: usize = data.iter().map(|s| s.tracks.len()).sum();
    println!(
        "wrote {} scenarios ({} train, {} test) with {tracks} tracks to {}",
        data.len(),
        tr.len(),
        te.len(),
        out.display()
    );
    Ok(())
}

fn load_samples(scenarios: &[&Scenario], window: &WindowConfig) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for s in scenarios {
        for k in 0..s.tracks.len() {
            out.extend(make_samples(s, k, window, s.params.agent.rate_hz)?);
        }
    }
    Ok(out)
}

fn read_data(dir: &Path) -> Result<Vec<Scenario>> {
    if !dir.join(SCENARIOS_FILE).is_file() {
        return Err(CliError::Usage(format!("no dataset at {}", dir.display())));
    }
    Ok(read_dataset(dir)?)
}

pub fn train_cmd(cfg: &RunConfig, data: &Path, out: &Path, init: Option<&Path>) -> Result<()> {
    let scenarios = read_data(data)?;
    let (tr, _) = split(&scenarios);
    let samples = load_samples(&tr, &cfg.model.window)?;
    if samples.is_empty() {
        return Err(CliError::Usage("training split has no complete windows".into()));
    }
    let mut bundle = ModelBundle::init(cfg.model.clone(), cfg.seed)?;
    if let Some(dir) = init {
        let prior = ModelBundle::load(dir, None)?;
        for (name, t) in prior.params.iter() {
            match bundle.params.get(name) {
                Some(cur) if cur.shape() == t.shape() => {}
                _ => {
                    return Err(CliError::Usage(format!(
                        "parameter `{name}` of {} does not fit this model",
                        dir.display()
                    )))
                }
            }
        }
        bundle.params.merge(&prior.params);
    }
    cfg.write_copy(out)?;
    println!("training on {} windows from {} scenarios", samples.len(), tr.len());
    let report = train(&samples, &mut bundle, &cfg.train, Some(out))?;
    for e in &report.epochs {
        println!(
            "epoch {:3}  dest {:.4}  pred {:.4}  reg {:.5}  total {:.4}",
            e.epoch, e.dest_nll, e.pred_nll, e.reg, e.total
        );
    }
    bundle.save(out)?;
    Ok(())
}

#[derive(Serialize)]
struct PredictRecord<'a> {
    checkpoint: String,
    data: String,
    track_id: u64,
    window: usize,
    t0: usize,
    model: &'a ModelConfig,
}

pub fn predict_cmd(checkpoint: &Path, data: &Path, track_id: u64, window: usize, out: &Path) -> Result<()> {
    let bundle = ModelBundle::load(checkpoint, None)?;
    let scenarios = read_data(data)?;
    let (scenario, k) = scenarios
        .iter()
        .find_map(|s| s.tracks.iter().position(|t| t.id == track_id).map(|k| (s, k)))
        .ok_or_else(|| CliError::Usage(format!("no track with id {track_id}")))?;
    let samples = make_samples(scenario, k, &bundle.cfg.window, scenario.params.agent.rate_hz)?;
    let sample = samples.get(window).ok_or_else(|| {
        CliError::Usage(format!("track {track_id} has {} complete windows, asked for #{window}", samples.len()))
    })?;
    let p = predict(&bundle, sample)?;
    fs::create_dir_all(out)?;

    fs::write(out.join("mixture.txt"), p.mixture.to_text())?;
    let dest = &p.destination;
    let cells = dest.spec.cells();
    let mut names: Vec<String> = (0..dest.theta_bins).map(|b| format!("heading_{b}")).collect();
    let mut channels: Vec<Vec<f64>> = dest.values().chunks(cells).map(|c| c.to_vec()).collect();
    let marginal = dest.marginal();
    names.push("marginal".into());
    channels.push(marginal.values().to_vec());
    write_grid_file(
        out.join("destination.map"),
        &GridFile {
            spec: dest.spec,
            names,
            channels,
        },
        GridFileKind::Text,
    )?;
    fs::write(out.join("destination.pgm"), pgm(&dest.spec, marginal.values()))?;

    let step_s = bundle.cfg.window.planner_every as f64 / scenario.params.agent.rate_hz;
    let stack_dir = out.join("stack");
    p.stack.export(&stack_dir, step_s, GridFileKind::Text)?;
    for (t, g) in p.stack.grids.iter().enumerate() {
        fs::write(stack_dir.join(format!("step_{:02}.pgm", t + 1)), pgm(&g.spec, g.values()))?;
    }
    let policy = PolicyMap {
        spec: sample.local,
        weights: p.actions.clone(),
    };
    fs::write(out.join("arrows.txt"), arrow_map(&sample.features, &policy.dominant_actions()))?;

    let record = PredictRecord {
        checkpoint: checkpoint.display().to_string(),
        data: data.display().to_string(),
        track_id,
        window,
        t0: sample.t0,
        model: &bundle.cfg,
    };
    fs::write(out.join(CONFIG_COPY), toml::to_string(&record).map_err(|e| CliError::Config(e.to_string()))?)?;

    println!("track {track_id} window #{window} (t0 = sample {})", sample.t0);
    let goal = sample.future_at(bundle.cfg.horizon())?.0;
    println!("  truth at destination horizon: ({:.2}, {:.2})", goal[0], goal[1]);
    for (t, g) in p.stack.grids.iter().enumerate() {
        let (i, j) = g.argmax();
        let c = g.spec.cell_center(i, j);
        println!("  step {:2}: peak ({:.2}, {:.2}) p = {:.4}", t + 1, c[0], c[1], g.get(i, j));
    }
    Ok(())
}

fn pick(kind: PredictorKind, bundles: &[ModelBundle]) -> Result<&ModelBundle> {
    let found = match kind {
        PredictorKind::Rmdn => bundles.iter().find(|b| b.cfg.rmdn.components > 1),
        PredictorKind::Rdn => bundles.iter().find(|b| b.cfg.rmdn.components == 1),
        PredictorKind::Mdp => bundles.iter().find(|b| b.cfg.planner == PlannerKind::Mdp),
        PredictorKind::Fwdbwd => bundles.iter().find(|b| b.cfg.planner == PlannerKind::Fwdbwd),
        PredictorKind::Imm => None,
    };
    found.ok_or_else(|| {
        let need = match kind {
            PredictorKind::Rmdn => "more than one mixture component",
            PredictorKind::Rdn => "a single mixture component",
            PredictorKind::Mdp => "the mdp planner",
            _ => "the fwdbwd planner",
        };
        CliError::Usage(format!("predictor {kind} needs a checkpoint with {need}"))
    })
}

pub fn eval_cmd(cfg: &RunConfig, checkpoints: &[PathBuf], data: &Path, predictors: &[PredictorKind], out: &Path) -> Result<()> {
    if predictors.is_empty() {
        return Err(CliError::Usage("no predictors requested".into()));
    }
    let bundles = checkpoints
        .iter()
        .map(|c| ModelBundle::load(c, None))
        .collect::<gridplan::Result<Vec<_>>>()?;
    let window = bundles.first().map(|b| b.cfg.window.clone()).unwrap_or_else(|| cfg.model.window.clone());
    if bundles.iter().any(|b| b.cfg.window != window) {
        return Err(CliError::Usage("checkpoints disagree on the window configuration".into()));
    }
    let scenarios = read_data(data)?;
    let (tr, te) = split(&scenarios);
    let rate = te.first().map(|s| s.params.agent.rate_hz).ok_or_else(|| CliError::Usage("test split is empty".into()))?;
    if scenarios.iter().any(|s| s.params.agent.rate_hz != rate) {
        return Err(CliError::Usage("scenarios disagree on the sample rate".into()));
    }
    let samples = load_samples(&te, &window)?;
    if samples.is_empty() {
        return Err(CliError::Usage("test split has no complete windows".into()));
    }

    let mut entries = Vec::new();
    let mut horizons = Vec::new();
    for kind in predictors.iter().filter(|k| **k != PredictorKind::Imm) {
        let b = pick(*kind, &bundles)?;
        match kind {
            PredictorKind::Rmdn | PredictorKind::Rdn => horizons.push(b.cfg.horizon()),
            _ => horizons.extend((1..=window.planner_steps()).map(|s| s * window.planner_every)),
        }
        entries.push((*kind, b));
    }
    let imm = if predictors.contains(&PredictorKind::Imm) {
        let mut hs = if cfg.eval.imm_horizons.is_empty() { horizons } else { cfg.eval.imm_horizons.clone() };
        if hs.is_empty() {
            hs = (1..=window.planner_steps()).map(|s| s * window.planner_every).collect();
        }
        hs.sort_unstable();
        hs.dedup();
        let tracks: Vec<Vec<[f64; 2]>> = tr.iter().flat_map(|s| s.tracks.iter().map(|t| t.positions.clone())).collect();
        let noise = ProcessNoise::estimate(&tracks, 1.0 / rate)?;
        Some((cfg.imm.clone(), noise, hs))
    } else {
        None
    };

    let rows = evaluate_predictors(&samples, &entries, imm, rate, cfg.eval.area)?;
    let summary = summarize(&rows);
    fs::create_dir_all(out)?;
    write_eval_csv(out.join(EVAL_FILE), &rows)?;
    write_summary_csv(out.join(SUMMARY_FILE), &summary)?;
    cfg.write_copy(out)?;
    println!("{} windows, {} rows", samples.len(), rows.len());
    for s in &summary {
        println!("{:8} {:5.2} s  {:.4}  (n = {})", s.predictor, s.horizon_s, s.mean_prob_mass, s.count);
    }
    Ok(())
}
