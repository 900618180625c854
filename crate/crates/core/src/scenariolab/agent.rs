//! Goal-directed agent on a feature map.

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gridworld::{FeatureMap, GridSpec};
use crate::mixture::wrap_angle;

use super::world::obstacle_distance;

/// Distance features saturate here, in meters.
pub const OBSTACLE_DISTANCE_CAP: f64 = 2.0;

pub const TRACK_FEATURES: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Seconds per cell move.
    pub step_seconds: f64,
    pub rate_hz: f64,
    /// Waypoint jitter as a fraction of the cell edge.
    pub jitter: f64,
    /// Move cap; 0 picks four times the grid perimeter.
    pub max_steps: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            step_seconds: 0.3,
            rate_hz: 10.0,
            jitter: 0.8,
            max_steps: 0,
        }
    }
}

impl AgentConfig {
    /// Track samples per cell move.
    pub fn samples_per_step(&self) -> Result<usize> {
        let s = self.step_seconds * self.rate_hz;
        if !(s >= 1.0 && (s - s.round()).abs() < 1e-9) {
            return Err(invalid(format!(
                "step of {} s at {} Hz is not a whole number of samples",
                self.step_seconds, self.rate_hz
            )));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(invalid(format!("jitter must lie in [0, 1), got {}", self.jitter)));
        }
        Ok(s.round() as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub scenario: u64,
    pub times: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
    pub headings: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<f64>>>,
    pub destination: [f64; 2],
    pub destination_heading: f64,
}

impl Track {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self, spec: &GridSpec) -> Result<()> {
        let n = self.positions.len();
        let bad = |m: String| invalid(format!("track {}: {m}", self.id));
        if n == 0 {
            return Err(bad("no samples".into()));
        }
        if self.times.len() != n || self.headings.len() != n {
            return Err(bad("times, positions and headings differ in length".into()));
        }
        if let Some(f) = &self.features {
            if f.len() != n {
                return Err(bad("feature count differs from sample count".into()));
            }
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(bad("timestamps are not strictly increasing".into()));
        }
        let pi = std::f64::consts::PI;
        if self.headings.iter().chain([&self.destination_heading]).any(|h| !(*h > -pi && *h <= pi)) {
            return Err(bad("heading outside (-pi, pi]".into()));
        }
        if let Some(k) = self.positions.iter().position(|p| spec.cell_of(*p).is_none()) {
            return Err(bad(format!("sample {k} lies outside the map")));
        }
        Ok(())
    }
}

/// Moves from `(i, j)` to free 8-neighbors, never cutting an obstacle corner.
pub fn free_moves(map: &FeatureMap, i: usize, j: usize) -> Vec<(usize, usize, f64)> {
    let spec = map.spec;
    let free = |i: i64, j: i64| {
        i >= 0 && j >= 0 && (i as usize) < spec.width && (j as usize) < spec.height && !map.is_obstacle(i as usize, j as usize)
    };
    let mut out = Vec::with_capacity(8);
    for (di, dj) in [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)] {
        let (ni, nj) = (i as i64 + di, j as i64 + dj);
        if !free(ni, nj) {
            continue;
        }
        if di != 0 && dj != 0 && !(free(i as i64 + di, j as i64) && free(i as i64, j as i64 + dj)) {
            continue;
        }
        out.push((ni as usize, nj as usize, if di != 0 && dj != 0 { std::f64::consts::SQRT_2 } else { 1.0 }));
    }
    out
}

/// Shortest-path distance in cell units from every cell to `goal`;
/// obstacles and unreachable cells are infinite.
pub fn distance_to(map: &FeatureMap, goal: (usize, usize)) -> Result<Vec<f64>> {
    let spec = map.spec;
    if goal.0 >= spec.width || goal.1 >= spec.height || map.is_obstacle(goal.0, goal.1) {
        return Err(invalid(format!("goal cell {goal:?} is not a free cell")));
    }
    let mut graph = UnGraph::<(), f64>::with_capacity(spec.cells(), 4 * spec.cells());
    let nodes: Vec<NodeIndex> = (0..spec.cells()).map(|_| graph.add_node(())).collect();
    for j in 0..spec.height {
        for i in 0..spec.width {
            if map.is_obstacle(i, j) {
                continue;
            }
            for (ni, nj, c) in free_moves(map, i, j) {
                // each undirected edge once
                if spec.index(ni, nj) > spec.index(i, j) {
                    graph.add_edge(nodes[spec.index(i, j)], nodes[spec.index(ni, nj)], c);
                }
            }
        }
    }
    let found = dijkstra(&graph, nodes[spec.index(goal.0, goal.1)], None, |e| *e.weight());
    let mut dist = vec![f64::INFINITY; spec.cells()];
    for (node, d) in found {
        dist[node.index()] = d;
    }
    Ok(dist)
}

/// Cell sequence chosen by a softmax over `-(move cost + distance)`.
/// A zero temperature descends the distance field greedily.
pub fn walk(
    map: &FeatureMap,
    dist: &[f64],
    start: (usize, usize),
    goal: (usize, usize),
    rng: &mut impl Rng,
    noise_temp: f64,
    max_steps: usize,
) -> Result<Vec<(usize, usize)>> {
    if !(noise_temp >= 0.0 && noise_temp.is_finite()) {
        return Err(invalid(format!("noise temperature must be finite and nonnegative, got {noise_temp}")));
    }
    let spec = map.spec;
    if start.0 >= spec.width || start.1 >= spec.height || map.is_obstacle(start.0, start.1) {
        return Err(invalid(format!("start cell {start:?} is not a free cell")));
    }
    if !dist[spec.index(start.0, start.1)].is_finite() {
        return Err(Error::Unreachable);
    }
    let mut path = vec![start];
    let mut at = start;
    while at != goal && path.len() <= max_steps {
        let moves: Vec<(usize, usize, f64)> = free_moves(map, at.0, at.1)
            .into_iter()
            .map(|(i, j, c)| (i, j, c + dist[spec.index(i, j)]))
            .filter(|m| m.2.is_finite())
            .collect();
        let best = moves.iter().map(|m| m.2).fold(f64::INFINITY, f64::min);
        let pick = if noise_temp == 0.0 {
            moves.iter().position(|m| m.2 == best).expect("a finite move exists")
        } else {
            let w: Vec<f64> = moves.iter().map(|m| (-(m.2 - best) / noise_temp).exp()).collect();
            let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
            let mut k = 0;
            while k + 1 < w.len() && u >= w[k] {
                u -= w[k];
                k += 1;
            }
            k
        };
        at = (moves[pick].0, moves[pick].1);
        path.push(at);
    }
    Ok(path)
}

/// Summed move cost of a cell path, in cells.
pub fn path_length(path: &[(usize, usize)]) -> f64 {
    path.windows(2)
        .map(|w| if w[0].0 != w[1].0 && w[0].1 != w[1].1 { std::f64::consts::SQRT_2 } else { 1.0 })
        .sum()
}

/// Causal headings: direction of the last displacement.
pub fn headings(positions: &[[f64; 2]]) -> Vec<f64> {
    let n = positions.len();
    let mut out = vec![0.0; n];
    for k in 1..n {
        let d = [positions[k][0] - positions[k - 1][0], positions[k][1] - positions[k - 1][1]];
        out[k] = if d[0] == 0.0 && d[1] == 0.0 { out[k - 1] } else { wrap_angle(d[1].atan2(d[0])) };
    }
    if n > 1 {
        out[0] = out[1];
    }
    out
}

/// Per-sample speed, heading sine and cosine, and distance to the nearest obstacle.
pub fn track_features(map: &FeatureMap, positions: &[[f64; 2]], rate_hz: f64) -> Result<Vec<Vec<f64>>> {
    let field = obstacle_distance(map, OBSTACLE_DISTANCE_CAP);
    let heads = headings(positions);
    let mut out = Vec::with_capacity(positions.len());
    for k in 0..positions.len() {
        let (a, b) = if k == 0 && positions.len() > 1 { (0, 1) } else { (k.saturating_sub(1), k) };
        let d = ((positions[b][0] - positions[a][0]).powi(2) + (positions[b][1] - positions[a][1]).powi(2)).sqrt();
        let (i, j) = map
            .spec
            .cell_of(positions[k])
            .ok_or_else(|| invalid(format!("sample {k} lies outside the map")))?;
        out.push(vec![d * rate_hz, heads[k].sin(), heads[k].cos(), field[map.spec.index(i, j)]]);
    }
    Ok(out)
}

/// Walk from `start` to `goal`, jitter the visited cell centers and
/// resample the piecewise-linear path at `cfg.rate_hz`.
pub fn simulate_agent(
    map: &FeatureMap,
    start: (usize, usize),
    goal: (usize, usize),
    rng: &mut impl Rng,
    noise_temp: f64,
    cfg: &AgentConfig,
) -> Result<Track> {
    let sub = cfg.samples_per_step()?;
    let spec = map.spec;
    let dist = distance_to(map, goal)?;
    let cap = if cfg.max_steps == 0 { 8 * (spec.width + spec.height) } else { cfg.max_steps };
    let path = walk(map, &dist, start, goal, rng, noise_temp, cap)?;
    let half = 0.5 * cfg.jitter * spec.cell_size;
    let waypoints: Vec<[f64; 2]> = path
        .iter()
        .map(|&(i, j)| {
            let c = spec.cell_center(i, j);
            let (dx, dy) = if half > 0.0 {
                (rng.random_range(-half..half), rng.random_range(-half..half))
            } else {
                (0.0, 0.0)
            };
            [c[0] + dx, c[1] + dy]
        })
        .collect();
    let samples = (waypoints.len() - 1) * sub + 1;
    let mut positions = Vec::with_capacity(samples);
    for n in 0..samples {
        let (k, r) = (n / sub, n % sub);
        if r == 0 {
            positions.push(waypoints[k]);
        } else {
            let f = r as f64 / sub as f64;
            let (a, b) = (waypoints[k], waypoints[k + 1]);
            positions.push([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]);
        }
    }
    let times = (0..samples).map(|n| n as f64 / cfg.rate_hz).collect();
    let heads = headings(&positions);
    let features = track_features(map, &positions, cfg.rate_hz)?;
    Ok(Track {
        id: 0,
        scenario: 0,
        times,
        destination: *positions.last().expect("nonempty"),
        destination_heading: *heads.last().expect("nonempty"),
        positions,
        headings: heads,
        features: Some(features),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenariolab::world::generate_world;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn open(n: usize) -> FeatureMap {
        FeatureMap::empty(GridSpec::new(n, n, 0.25, [0.0, 0.0]).unwrap())
    }

    #[test]
    fn greedy_walk_is_geodesic() {
        let map = open(16);
        let dist = distance_to(&map, (12, 5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let path = walk(&map, &dist, (2, 1), (12, 5), &mut rng, 0.0, 100).unwrap();
        assert_eq!(*path.last().unwrap(), (12, 5));
        // 4 diagonal and 6 straight moves
        assert_eq!(path.len(), 11);
        assert!((path_length(&path) - (6.0 + 4.0 * std::f64::consts::SQRT_2)).abs() < 1e-12);
    }

    #[test]
    fn corners_are_not_cut() {
        let mut map = open(5);
        let s = map.spec;
        map.channel_mut("obstacles").unwrap()[s.index(2, 1)] = 1.0;
        let moves = free_moves(&map, 1, 1);
        assert!(!moves.iter().any(|m| (m.0, m.1) == (2, 2) || (m.0, m.1) == (2, 0)));
        assert!(moves.iter().any(|m| (m.0, m.1) == (0, 2)));
    }

    #[test]
    fn walled_goal_is_unreachable() {
        let mut map = open(7);
        let s = map.spec;
        for j in 0..7 {
            map.channel_mut("obstacles").unwrap()[s.index(3, j)] = 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = simulate_agent(&map, (1, 1), (5, 5), &mut rng, 0.1, &AgentConfig::default());
        assert!(matches!(r, Err(Error::Unreachable)));
        assert!(simulate_agent(&map, (3, 1), (5, 5), &mut rng, 0.1, &AgentConfig::default()).is_err());
    }

    #[test]
    fn tracks_avoid_obstacles_and_validate() {
        let spec = GridSpec::new(32, 32, 0.25, [0.0, 0.0]).unwrap();
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let map = generate_world(&mut rng, spec, 0.2).unwrap();
            let free: Vec<(usize, usize)> =
                (0..32 * 32).map(|k| (k % 32, k / 32)).filter(|&(i, j)| !map.is_obstacle(i, j)).collect();
            let start = free[rng.random_range(0..free.len())];
            let goal = free[rng.random_range(0..free.len())];
            match simulate_agent(&map, start, goal, &mut rng, 0.5, &AgentConfig::default()) {
                Ok(t) => {
                    t.validate(&spec).unwrap();
                    for p in &t.positions {
                        let (i, j) = spec.cell_of(*p).unwrap();
                        assert!(!map.is_obstacle(i, j), "seed {seed}");
                    }
                    assert_eq!(t.features.as_ref().unwrap()[0].len(), TRACK_FEATURES);
                }
                Err(Error::Unreachable) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn excess_length_grows_with_temperature() {
        let map = open(20);
        let dist = distance_to(&map, (17, 15)).unwrap();
        let d0 = dist[map.spec.index(2, 3)];
        let excess = |temp: f64| {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..200)
                .map(|_| path_length(&walk(&map, &dist, (2, 3), (17, 15), &mut rng, temp, 400).unwrap()) - d0)
                .sum::<f64>()
                / 200.0
        };
        let (a, b, c) = (excess(0.05), excess(0.5), excess(2.0));
        assert!(a >= -1e-9 && a < b && b < c, "{a} {b} {c}");
    }

    #[test]
    fn resampled_at_ten_hertz() {
        let map = open(12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = simulate_agent(&map, (1, 1), (9, 1), &mut rng, 0.0, &AgentConfig::default()).unwrap();
        assert_eq!(t.len(), 8 * 3 + 1);
        assert!((t.times[3] - 0.3).abs() < 1e-12);
        assert_eq!(t.destination, *t.positions.last().unwrap());
        let still = AgentConfig { jitter: 0.0, ..Default::default() };
        let t = simulate_agent(&map, (1, 1), (9, 1), &mut rng, 0.0, &still).unwrap();
        assert!(t.headings.iter().all(|h| *h == 0.0));
        assert!(t.features.unwrap().iter().all(|f| (f[0] - 0.25 / 0.3).abs() < 1e-9));
    }
}
