//! History/future windows cut from tracks, in an agent-centered frame.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gridworld::{FeatureMap, GridSpec};
use crate::recurrent::TrackInput;

use super::agent::track_features;
use super::Scenario;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    /// Observed samples, the last one being the present.
    pub history: usize,
    /// Predicted samples after the present.
    pub future: usize,
    /// Track samples between consecutive window starts.
    pub stride: usize,
    /// Track samples per planner step.
    pub planner_every: usize,
    pub width: usize,
    pub height: usize,
    /// Windows kept per track; 0 keeps all.
    pub per_track: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            history: 30,
            future: 30,
            stride: 10,
            planner_every: 3,
            width: 64,
            height: 64,
            per_track: 0,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history == 0 || self.future == 0 || self.stride == 0 || self.planner_every == 0 {
            return Err(invalid("window lengths and stride must be positive"));
        }
        if !self.future.is_multiple_of(self.planner_every) {
            return Err(invalid(format!(
                "future of {} samples is not a whole number of planner steps of {}",
                self.future, self.planner_every
            )));
        }
        Ok(())
    }

    pub fn planner_steps(&self) -> usize {
        self.future / self.planner_every
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub track_id: u64,
    pub scenario_id: u64,
    /// Track index of the present sample.
    pub t0: usize,
    /// World geometry of the window.
    pub window: GridSpec,
    /// Window geometry centered on the origin.
    pub local: GridSpec,
    /// World position of the local origin.
    pub center: [f64; 2],
    pub history: TrackInput,
    pub future: Vec<[f64; 2]>,
    pub future_headings: Vec<f64>,
    /// Ground-truth cell after each planner step.
    pub targets: Vec<(usize, usize)>,
    pub start: (usize, usize),
    /// Map crop over the window, in local geometry.
    pub features: FeatureMap,
}

impl Sample {
    /// Local position and heading `k` future samples ahead, `k >= 1`.
    pub fn future_at(&self, k: usize) -> Result<([f64; 2], f64)> {
        if k == 0 || k > self.future.len() {
            return Err(invalid(format!("future sample {k} outside 1..={}", self.future.len())));
        }
        Ok((self.future[k - 1], self.future_headings[k - 1]))
    }

    /// Final future position and heading.
    pub fn destination(&self) -> ([f64; 2], f64) {
        (*self.future.last().expect("nonempty future"), *self.future_headings.last().expect("nonempty future"))
    }
}

/// Windows of `track` per `cfg`. Windows whose future leaves the grid are skipped.
pub fn make_samples(scenario: &Scenario, track_index: usize, cfg: &WindowConfig, rate_hz: f64) -> Result<Vec<Sample>> {
    cfg.validate()?;
    let track = scenario
        .tracks
        .get(track_index)
        .ok_or_else(|| invalid(format!("scenario {} has no track {track_index}", scenario.id)))?;
    let map = &scenario.map;
    let computed;
    let feats = match &track.features {
        Some(f) => f,
        None => {
            computed = track_features(map, &track.positions, rate_hz)?;
            &computed
        }
    };
    let n = track.len();
    let mut out = Vec::new();
    let mut t0 = cfg.history - 1;
    while t0 + cfg.future < n {
        if cfg.per_track > 0 && out.len() == cfg.per_track {
            break;
        }
        let (ci, cj) = map
            .spec
            .cell_of(track.positions[t0])
            .ok_or_else(|| invalid(format!("track {} leaves the map", track.id)))?;
        let center = map.spec.cell_center(ci, cj);
        let window = GridSpec::centered_on(cfg.width, cfg.height, map.spec.cell_size, center)?;
        let local = GridSpec::centered_on(cfg.width, cfg.height, map.spec.cell_size, [0.0, 0.0])?;
        let rel = |p: [f64; 2]| [p[0] - center[0], p[1] - center[1]];
        let lo = t0 + 1 - cfg.history;
        let history = TrackInput {
            positions: track.positions[lo..=t0].iter().map(|p| rel(*p)).collect(),
            features: feats[lo..=t0].to_vec(),
        };
        let future: Vec<[f64; 2]> = track.positions[t0 + 1..=t0 + cfg.future].iter().map(|p| rel(*p)).collect();
        let targets: Option<Vec<(usize, usize)>> = (1..=cfg.planner_steps())
            .map(|s| local.cell_of(future[s * cfg.planner_every - 1]))
            .collect();
        if let Some(targets) = targets {
            let mut features = map.crop(window);
            features.spec = local;
            out.push(Sample {
                track_id: track.id,
                scenario_id: scenario.id,
                t0,
                window,
                local,
                center,
                history,
                future_headings: track.headings[t0 + 1..=t0 + cfg.future].to_vec(),
                future,
                targets,
                start: local.center_cell(),
                features,
            });
        }
        t0 += cfg.stride;
    }
    Ok(out)
}
