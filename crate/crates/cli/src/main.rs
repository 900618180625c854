#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gridplan::scenariolab::WorldKind;
use gridplan::training::{PlannerKind, PredictorKind, TrainMode};
use toml::Value;

use config::{parse_set, RunConfig};
use error::Result;

#[derive(Parser)]
#[command(name = "gridplan", version, about = "Grid-based destination and trajectory prediction")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set model.rmdn.components=4`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_set)]
    set: Vec<(String, Value)>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scenarios: Option<usize>,
        #[arg(long)]
        tracks_per: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        obstacle_density: Option<f64>,
        /// random, junction or detour.
        #[arg(long)]
        kind: Option<WorldKind>,
        /// Replace dataset files in a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Train on the training split of a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// dest, planner or joint.
        #[arg(long)]
        mode: Option<TrainMode>,
        /// mdp or fwdbwd.
        #[arg(long)]
        planner: Option<PlannerKind>,
        #[arg(long)]
        seed: Option<u64>,
        /// Start from the parameters of an earlier run.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Predict one track window and write grids, images and an arrow map.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        track_id: u64,
        /// Index among the track's complete windows.
        #[arg(long, default_value_t = 0)]
        window: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictors on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Model directories; repeat or separate with commas.
        #[arg(long, value_delimiter = ',')]
        checkpoint: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "rmdn,mdp,fwdbwd,imm")]
        predictors: Vec<PredictorKind>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve(common: &Common, flags: Vec<(&str, Option<Value>)>) -> Result<RunConfig> {
    let mut sets = common.set.clone();
    sets.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
    RunConfig::resolve(common.config.as_deref(), &sets)
}

fn int(v: Option<impl Into<u64>>) -> Result<Option<Value>> {
    v.map(|v| {
        i64::try_from(v.into())
            .map(Value::Integer)
            .map_err(|_| error::CliError::Config("value does not fit a signed 64-bit integer".into()))
    })
    .transpose()
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenData {
            common,
            out,
            scenarios,
            tracks_per,
            seed,
            obstacle_density,
            kind,
            force,
        } => {
            let cfg = resolve(
                &common,
                vec![
                    ("scenarios", int(scenarios.map(|v| v as u64))?),
                    ("data.tracks", int(tracks_per.map(|v| v as u64))?),
                    ("seed", int(seed)?),
                    ("data.obstacle_density", obstacle_density.map(Value::Float)),
                    ("data.kind", kind.map(|k| Value::String(k.to_string()))),
                ],
            )?;
            commands::gen_data(&cfg, &out, force)
        }
        Cmd::Train {
            common,
            data,
            out,
            mode,
            planner,
            seed,
            init,
        } => {
            let cfg = resolve(
                &common,
                vec![
                    ("train.mode", mode.map(|m| Value::String(m.to_string()))),
                    ("model.planner", planner.map(|p| Value::String(p.to_string()))),
                    ("seed", int(seed)?),
                ],
            )?;
            commands::train_cmd(&cfg, &data, &out, init.as_deref())
        }
        Cmd::Predict {
            checkpoint,
            data,
            track_id,
            window,
            out,
        } => commands::predict_cmd(&checkpoint, &data, track_id, window, &out),
        Cmd::Eval {
            common,
            checkpoint,
            data,
            predictors,
            out,
        } => {
            let cfg = resolve(&common, Vec::new())?;
            commands::eval_cmd(&cfg, &checkpoint, &data, &predictors, &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
