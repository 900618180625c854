//! Run configuration: a TOML file, then `--set key.path=value` overrides,
//! then the typed command-line flags, resolved into one [`RunConfig`].

use std::fs;
use std::path::Path;

use gridplan::baseline_imm::ImmConfig;
use gridplan::scenariolab::{ScenarioParams, CIRCLE_AREA};
use gridplan::training::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliError, Result};

pub const CONFIG_COPY: &str = "config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Circle area (m²) around the ground truth.
    pub area: f64,
    /// IMM horizons in samples; empty means every horizon another
    /// requested predictor is scored at.
    pub imm_horizons: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            area: CIRCLE_AREA,
            imm_horizons: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. Data, initialization and training draw separate
    /// streams from it.
    pub seed: u64,
    pub scenarios: usize,
    pub data: ScenarioParams,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub imm: ImmConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scenarios: 10,
            data: ScenarioParams::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            imm: ImmConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// `file` first, then `sets` in order (later wins).
    pub fn resolve(file: Option<&Path>, sets: &[(String, Value)]) -> Result<Self> {
        let mut table = match file {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                text.parse::<Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for (key, value) in sets {
            set_path(&mut table, key, value.clone())?;
        }
        let mut cfg: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.spec()?;
        self.model.validate()?;
        self.train.validate()?;
        self.imm.validate()?;
        if self.scenarios == 0 {
            return Err(CliError::Config("need at least one scenario".into()));
        }
        if self.model.cell_size != self.data.cell_size {
            return Err(CliError::Config(format!(
                "model cell size {} differs from data cell size {}",
                self.model.cell_size, self.data.cell_size
            )));
        }
        if !(self.eval.area > 0.0) {
            return Err(CliError::Config("evaluation area must be positive".into()));
        }
        if self.eval.imm_horizons.contains(&0) {
            return Err(CliError::Config("IMM horizons start at one sample".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn write_copy(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CONFIG_COPY), self.to_toml()?)?;
        Ok(())
    }
}

/// Parses `key.path=value`. The value is read as a TOML value and falls
/// back to a plain string.
pub fn parse_set(arg: &str) -> std::result::Result<(String, Value), String> {
    let (key, raw) = arg.split_once('=').ok_or_else(|| format!("expected key=value, got `{arg}`"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(format!("bad key `{key}`"));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

fn set_path(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("nonempty key");
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
