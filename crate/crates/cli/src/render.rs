//! Grayscale images and text summaries of grids. The top image row is the
//! highest `y`.

use gridplan::gridworld::{FeatureMap, GridSpec, MOVES};

/// Binary portable graymap, scaled so the maximum is 255.
pub fn pgm(spec: &GridSpec, values: &[f64]) -> Vec<u8> {
    let (w, h) = (spec.width, spec.height);
    let max = values.iter().copied().fold(0.0, f64::max);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for j in (0..h).rev() {
        for i in 0..w {
            let v = values[spec.index(i, j)];
            let px = if max > 0.0 { (255.0 * v / max).round().clamp(0.0, 255.0) as u8 } else { 0 };
            out.push(px);
        }
    }
    out
}

/// Glyph per entry of [`MOVES`].
pub const ARROWS: [char; 9] = ['·', '→', '↗', '↑', '↖', '←', '↙', '↓', '↘'];

pub const OBSTACLE_GLYPH: char = '#';

/// Dominant action per cell, obstacles drawn as [`OBSTACLE_GLYPH`].
pub fn arrow_map(features: &FeatureMap, dominant: &[usize]) -> String {
    let spec = features.spec;
    let mut s = String::new();
    for j in (0..spec.height).rev() {
        for i in 0..spec.width {
            let c = if features.is_obstacle(i, j) {
                OBSTACLE_GLYPH
            } else {
                let a = dominant[spec.index(i, j)];
                if a < MOVES.len() { ARROWS[a] } else { '?' }
            };
            s.push(c);
        }
        s.push('\n');
    }
    s
}
