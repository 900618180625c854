//! Synthetic feature maps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gridworld::{FeatureMap, GridSpec};

pub const MAX_DENSITY: f64 = 0.3;

/// Width of the corridors in the hand-built layouts, in cells.
pub const CORRIDOR: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorldKind {
    /// Random rectangles around a road band.
    Random,
    /// T-shaped corridor: agents walk up the stem and turn left or right.
    Junction,
    /// Open map with one block between the start and goal areas.
    Detour,
}

impl std::str::FromStr for WorldKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "junction" => Ok(Self::Junction),
            "detour" => Ok(Self::Detour),
            _ => Err(invalid(format!("unknown world kind `{s}`"))),
        }
    }
}

impl std::fmt::Display for WorldKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Random => "random",
            Self::Junction => "junction",
            Self::Detour => "detour",
        })
    }
}

fn set_topview(map: &mut FeatureMap) {
    let n = map.spec.cells();
    let obstacles = map.channel("obstacles").expect("obstacles").to_vec();
    let road = map.channel("road").expect("road").to_vec();
    let side = map.channel("sidewalk").expect("sidewalk").to_vec();
    let top = map.channel_mut("topview").expect("topview");
    for k in 0..n {
        top[k] = if obstacles[k] > 0.5 {
            1.0
        } else {
            0.2 + 0.6 * road[k] + 0.3 * side[k]
        };
    }
}

fn fill_rect(ch: &mut [f64], spec: &GridSpec, i0: usize, j0: usize, w: usize, h: usize) -> usize {
    let mut added = 0;
    for j in j0..(j0 + h).min(spec.height) {
        for i in i0..(i0 + w).min(spec.width) {
            let k = spec.index(i, j);
            if ch[k] < 0.5 {
                ch[k] = 1.0;
                added += 1;
            }
        }
    }
    added
}

/// Rectangles are added until the obstacle fraction reaches `density`.
pub fn generate_world(rng: &mut impl Rng, spec: GridSpec, density: f64) -> Result<FeatureMap> {
    if !(0.0..=MAX_DENSITY).contains(&density) {
        return Err(invalid(format!("obstacle density must lie in [0, {MAX_DENSITY}], got {density}")));
    }
    let mut map = FeatureMap::empty(spec);
    let (w, h) = (spec.width, spec.height);
    let band = (h / 8).max(2);
    let side = (h / 16).max(1);
    let r0 = rng.random_range(0..h.saturating_sub(band).max(1));
    {
        let road = map.channel_mut("road").expect("road");
        for j in r0..(r0 + band).min(h) {
            for i in 0..w {
                road[spec.index(i, j)] = 1.0;
            }
        }
    }
    {
        let walk = map.channel_mut("sidewalk").expect("sidewalk");
        let below = r0.saturating_sub(side)..r0;
        let above = (r0 + band).min(h)..(r0 + band + side).min(h);
        for j in below.chain(above) {
            for i in 0..w {
                walk[spec.index(i, j)] = 1.0;
            }
        }
    }
    let target = (density * spec.cells() as f64).ceil() as usize;
    let max_side = (w.min(h) / 8).max(2);
    let obstacles = map.channel_mut("obstacles").expect("obstacles");
    let mut filled = 0;
    while filled < target {
        let rw = rng.random_range(2..=max_side);
        let rh = rng.random_range(2..=max_side);
        let i0 = rng.random_range(0..w);
        let j0 = rng.random_range(0..h);
        filled += fill_rect(obstacles, &spec, i0, j0, rw, rh);
    }
    set_topview(&mut map);
    Ok(map)
}

/// Rows of the junction's crossbar, bottom first.
pub fn junction_bar(spec: &GridSpec) -> std::ops::Range<usize> {
    let top = spec.height - 2;
    top + 1 - CORRIDOR..top + 1
}

/// Columns of the junction's stem.
pub fn junction_stem(spec: &GridSpec) -> std::ops::Range<usize> {
    let c = spec.width / 2;
    c - CORRIDOR / 2..c - CORRIDOR / 2 + CORRIDOR
}

/// T-shaped corridor with a one-cell wall all around.
pub fn junction_world(spec: GridSpec) -> Result<FeatureMap> {
    if spec.width < 2 * CORRIDOR + 4 || spec.height < 2 * CORRIDOR + 4 {
        return Err(invalid("grid too small for a junction"));
    }
    let mut map = FeatureMap::empty(spec);
    let bar = junction_bar(&spec);
    let stem = junction_stem(&spec);
    let free = |i: usize, j: usize| {
        let in_bar = bar.contains(&j) && i >= 1 && i + 1 < spec.width;
        let in_stem = stem.contains(&i) && j >= 1 && j < bar.start;
        in_bar || in_stem
    };
    let mut open = vec![0.0; spec.cells()];
    for j in 0..spec.height {
        for i in 0..spec.width {
            if free(i, j) {
                open[spec.index(i, j)] = 1.0;
            }
        }
    }
    map.channel_mut("obstacles").expect("obstacles").iter_mut().zip(&open).for_each(|(o, f)| *o = 1.0 - f);
    map.channel_mut("sidewalk").expect("sidewalk").copy_from_slice(&open);
    set_topview(&mut map);
    Ok(map)
}

/// Cell rectangle `(i0, j0, w, h)` of the block in a detour world.
pub fn detour_block(spec: &GridSpec) -> (usize, usize, usize, usize) {
    let w = (spec.width / 4).max(2);
    let h = (spec.height / 8).max(2);
    (spec.width / 2 - w / 2, spec.height / 2 - h / 2, w, h)
}

/// Open map with a sidewalk everywhere and a single central block.
pub fn detour_world(spec: GridSpec) -> Result<FeatureMap> {
    if spec.width < 8 || spec.height < 8 {
        return Err(invalid("grid too small for a detour world"));
    }
    let mut map = FeatureMap::empty(spec);
    let (i0, j0, w, h) = detour_block(&spec);
    fill_rect(map.channel_mut("obstacles").expect("obstacles"), &spec, i0, j0, w, h);
    let obstacles = map.channel("obstacles").expect("obstacles").to_vec();
    for (s, o) in map.channel_mut("sidewalk").expect("sidewalk").iter_mut().zip(&obstacles) {
        *s = 1.0 - o;
    }
    set_topview(&mut map);
    Ok(map)
}

pub fn obstacle_fraction(map: &FeatureMap) -> f64 {
    let ch = map.channel("obstacles").unwrap_or(&[]);
    ch.iter().filter(|v| **v > 0.5).count() as f64 / map.spec.cells() as f64
}

/// Euclidean distance in meters from every cell center to the nearest
/// obstacle center, capped at `cap`.
pub fn obstacle_distance(map: &FeatureMap, cap: f64) -> Vec<f64> {
    let spec = map.spec;
    let mut occupied = Vec::new();
    for j in 0..spec.height {
        for i in 0..spec.width {
            if map.is_obstacle(i, j) {
                occupied.push((i as f64, j as f64));
            }
        }
    }
    let mut out = vec![cap; spec.cells()];
    for j in 0..spec.height {
        for i in 0..spec.width {
            let mut best = f64::INFINITY;
            for &(oi, oj) in &occupied {
                let d = (oi - i as f64).powi(2) + (oj - j as f64).powi(2);
                best = best.min(d);
            }
            out[spec.index(i, j)] = (best.sqrt() * spec.cell_size).min(cap);
        }
    }
    out
}
