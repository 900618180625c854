//! Synthetic worlds, goal-directed agent tracks, dataset files and the
//! probability-in-circle evaluation harness.

mod agent;
mod dataset;
mod eval;
mod windows;
mod world;

pub use agent::{
    distance_to, free_moves, headings, path_length, simulate_agent, track_features, walk, AgentConfig, Track,
    OBSTACLE_DISTANCE_CAP, TRACK_FEATURES,
};
pub use dataset::{read_dataset, read_tracks, write_dataset, MAP_PREFIX, SCENARIOS_FILE, TRACKS_FILE};
pub use eval::{
    evaluate_gaussians, evaluate_grids, grid_mass_in_circle, read_eval_csv, summarize, write_eval_csv,
    write_summary_csv, EvalRow, SummaryRow, CIRCLE_AREA,
};
pub use windows::{make_samples, Sample, WindowConfig};
pub use world::{
    detour_block, detour_world, generate_world, junction_bar, junction_stem, junction_world, obstacle_distance,
    obstacle_fraction, WorldKind, CORRIDOR, MAX_DENSITY,
};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gridworld::{FeatureMap, GridSpec};

/// Independent generator for `stream` under a master seed.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of child `stream` under a master seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    substream(seed, stream).next_u64()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub kind: WorldKind,
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub obstacle_density: f64,
    pub tracks: usize,
    pub noise_temp: f64,
    /// Minimum start-to-goal distance in cells for random worlds.
    pub min_path: usize,
    /// Cells kept clear between starts or goals and the map edge.
    pub margin: usize,
    pub agent: AgentConfig,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            kind: WorldKind::Random,
            width: 64,
            height: 64,
            cell_size: 0.25,
            obstacle_density: 0.1,
            tracks: 40,
            noise_temp: 0.3,
            min_path: 24,
            margin: 3,
            agent: AgentConfig::default(),
        }
    }
}

impl ScenarioParams {
    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.width, self.height, self.cell_size, [0.0, 0.0])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub id: u64,
    pub seed: u64,
    pub params: ScenarioParams,
    pub map: FeatureMap,
    pub tracks: Vec<Track>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        for t in &self.tracks {
            if t.scenario != self.id {
                return Err(invalid(format!("track {} belongs to scenario {}, not {}", t.id, t.scenario, self.id)));
            }
            t.validate(&self.map.spec)?;
        }
        Ok(())
    }
}

fn free_cell(map: &FeatureMap, rng: &mut impl Rng, margin: usize) -> Result<(usize, usize)> {
    let spec = map.spec;
    if 2 * margin >= spec.width || 2 * margin >= spec.height {
        return Err(invalid("margin leaves no room on the map"));
    }
    for _ in 0..10_000 {
        let i = rng.random_range(margin..spec.width - margin);
        let j = rng.random_range(margin..spec.height - margin);
        if !map.is_obstacle(i, j) {
            return Ok((i, j));
        }
    }
    Err(invalid("no free cell found"))
}

fn endpoints(p: &ScenarioParams, map: &FeatureMap, rng: &mut impl Rng) -> Result<((usize, usize), (usize, usize))> {
    let spec = map.spec;
    match p.kind {
        WorldKind::Random => {
            for _ in 0..1000 {
                let start = free_cell(map, rng, p.margin)?;
                let goal = free_cell(map, rng, p.margin)?;
                let d = distance_to(map, goal)?[spec.index(start.0, start.1)];
                if d.is_finite() && d >= p.min_path as f64 {
                    return Ok((start, goal));
                }
            }
            Err(invalid("could not place a start and goal far enough apart"))
        }
        WorldKind::Junction => {
            let stem = junction_stem(&spec);
            let bar = junction_bar(&spec);
            let i = rng.random_range(stem.clone());
            let j = bar.start.saturating_sub(12 - rng.random_range(0..2)).max(1);
            let gj = rng.random_range(bar);
            let gi = if rng.random_bool(0.5) { 1 } else { spec.width - 2 };
            Ok(((i, j), (gi, gj)))
        }
        WorldKind::Detour => {
            let (_, j0, _, h) = detour_block(&spec);
            let c = spec.width / 2;
            let i = c - 1 + rng.random_range(0..3);
            let gi = c - 1 + rng.random_range(0..3);
            let j = j0.saturating_sub(12 + rng.random_range(0..2)).max(1);
            let gj = (j0 + h + 8 + rng.random_range(0..2)).min(spec.height - 2);
            Ok(((i, j), (gi, gj)))
        }
    }
}

/// Scenario whose map and tracks follow from `seed` alone. Track ids run
/// from `first_track`.
pub fn generate_scenario(id: u64, seed: u64, params: &ScenarioParams, first_track: u64) -> Result<Scenario> {
    let spec = params.spec()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let map = match params.kind {
        WorldKind::Random => generate_world(&mut rng, spec, params.obstacle_density)?,
        WorldKind::Junction => junction_world(spec)?,
        WorldKind::Detour => detour_world(spec)?,
    };
    let mut tracks = Vec::with_capacity(params.tracks);
    let mut attempts = 0;
    while tracks.len() < params.tracks {
        attempts += 1;
        if attempts > 100 * params.tracks.max(1) {
            return Err(invalid(format!("scenario {id}: failed to simulate enough tracks")));
        }
        let (start, goal) = endpoints(params, &map, &mut rng)?;
        let mut t = match simulate_agent(&map, start, goal, &mut rng, params.noise_temp, &params.agent) {
            Ok(t) => t,
            Err(Error::Unreachable) => continue,
            Err(e) => return Err(e),
        };
        t.id = first_track + tracks.len() as u64;
        t.scenario = id;
        tracks.push(t);
    }
    Ok(Scenario {
        id,
        seed,
        params: params.clone(),
        map,
        tracks,
    })
}

/// `count` scenarios with ids `0..count`, seeds split from `seed`.
pub fn generate_dataset(seed: u64, count: usize, params: &ScenarioParams) -> Result<Vec<Scenario>> {
    (0..count as u64)
        .map(|id| generate_scenario(id, derive_seed(seed, id), params, id * params.tracks as u64))
        .collect()
}

/// Every fifth scenario, by position, goes to the test split.
pub fn split(scenarios: &[Scenario]) -> (Vec<&Scenario>, Vec<&Scenario>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (k, s) in scenarios.iter().enumerate() {
        if scenarios.len() > 1 && k % 5 == 4 {
            test.push(s);
        } else {
            train.push(s);
        }
    }
    (train, test)
}
