//! Probability mass around ground-truth positions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baseline_imm::{prob_in_circle, GaussianPrediction};
use crate::error::{invalid, Result};
use crate::gridworld::StateGrid;

/// Evaluation circle area in square meters.
pub const CIRCLE_AREA: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub track_id: u64,
    pub horizon_s: f64,
    pub predictor: String,
    pub prob_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub predictor: String,
    pub horizon_s: f64,
    pub mean_prob_mass: f64,
    pub count: usize,
}

/// Mass of the cells whose centers lie within the disk of `area` around `center`.
pub fn grid_mass_in_circle(grid: &StateGrid, center: [f64; 2], area: f64) -> Result<f64> {
    if !(area > 0.0) {
        return Err(invalid(format!("circle area must be positive, got {area}")));
    }
    let r2 = area / std::f64::consts::PI;
    let spec = grid.spec;
    let mut mass = 0.0;
    for j in 0..spec.height {
        for i in 0..spec.width {
            let c = spec.cell_center(i, j);
            if (c[0] - center[0]).powi(2) + (c[1] - center[1]).powi(2) <= r2 {
                mass += grid.get(i, j);
            }
        }
    }
    Ok(mass.clamp(0.0, 1.0))
}

fn check_aligned(n: usize, gt: usize, horizons: usize) -> Result<()> {
    if n != gt || n != horizons {
        return Err(invalid(format!(
            "misaligned horizons: {n} predictions, {gt} ground-truth positions, {horizons} horizons"
        )));
    }
    Ok(())
}

pub fn evaluate_grids(
    grids: &[StateGrid],
    gt: &[[f64; 2]],
    horizons_s: &[f64],
    track_id: u64,
    predictor: &str,
    area: f64,
) -> Result<Vec<EvalRow>> {
    check_aligned(grids.len(), gt.len(), horizons_s.len())?;
    grids
        .iter()
        .zip(gt)
        .zip(horizons_s)
        .map(|((g, p), h)| {
            Ok(EvalRow {
                track_id,
                horizon_s: *h,
                predictor: predictor.to_string(),
                prob_mass: grid_mass_in_circle(g, *p, area)?,
            })
        })
        .collect()
}

pub fn evaluate_gaussians(
    preds: &[GaussianPrediction],
    gt: &[[f64; 2]],
    horizons_s: &[f64],
    track_id: u64,
    predictor: &str,
    area: f64,
) -> Result<Vec<EvalRow>> {
    check_aligned(preds.len(), gt.len(), horizons_s.len())?;
    preds
        .iter()
        .zip(gt)
        .zip(horizons_s)
        .map(|((g, p), h)| {
            Ok(EvalRow {
                track_id,
                horizon_s: *h,
                predictor: predictor.to_string(),
                prob_mass: prob_in_circle(g, *p, area)?,
            })
        })
        .collect()
}

/// Mean mass per (predictor, horizon), predictors in first-seen order and
/// horizons ascending.
pub fn summarize(rows: &[EvalRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    for r in rows {
        match out.iter().position(|s| s.predictor == r.predictor && s.horizon_s == r.horizon_s) {
            Some(k) => {
                sums[k] += r.prob_mass;
                out[k].count += 1;
            }
            None => {
                out.push(SummaryRow {
                    predictor: r.predictor.clone(),
                    horizon_s: r.horizon_s,
                    mean_prob_mass: 0.0,
                    count: 1,
                });
                sums.push(r.prob_mass);
            }
        }
    }
    for (s, sum) in out.iter_mut().zip(sums) {
        s.mean_prob_mass = sum / s.count as f64;
    }
    let order: Vec<String> = out.iter().fold(Vec::new(), |mut v, s| {
        if !v.contains(&s.predictor) {
            v.push(s.predictor.clone());
        }
        v
    });
    out.sort_by(|a, b| {
        let ka = order.iter().position(|p| *p == a.predictor);
        let kb = order.iter().position(|p| *p == b.predictor);
        ka.cmp(&kb).then(a.horizon_s.total_cmp(&b.horizon_s))
    });
    out
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| invalid(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| invalid(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Header `track_id,horizon_s,predictor,prob_mass`.
pub fn write_eval_csv(path: impl AsRef<Path>, rows: &[EvalRow]) -> Result<()> {
    write_csv(path.as_ref(), rows)
}

pub fn write_summary_csv(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    write_csv(path.as_ref(), rows)
}

pub fn read_eval_csv(path: impl AsRef<Path>) -> Result<Vec<EvalRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| invalid(e.to_string()))?;
    let mut out = Vec::new();
    for (k, row) in r.deserialize().enumerate() {
        out.push(row.map_err(|e| crate::Error::Parse {
            path: path.display().to_string(),
            line: k + 2,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::GridSpec;

    fn spec() -> GridSpec {
        GridSpec::centered_on(64, 64, 0.25, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn delta_and_uniform() {
        let s = spec();
        let d = StateGrid::delta(s, 10, 20);
        let c = s.cell_center(10, 20);
        assert_eq!(grid_mass_in_circle(&d, c, CIRCLE_AREA).unwrap(), 1.0);
        let u = StateGrid::uniform(s);
        assert!((grid_mass_in_circle(&u, c, CIRCLE_AREA).unwrap() - 1.0 / 4096.0).abs() < 1e-18);
        let corner = [c[0] + 0.125, c[1] + 0.125];
        assert!((grid_mass_in_circle(&u, corner, CIRCLE_AREA).unwrap() - 4.0 / 4096.0).abs() < 1e-18);
    }

    #[test]
    fn monotone_in_area() {
        let s = spec();
        let g = StateGrid::new(s, (0..4096).map(|k| ((k * 7919) % 101) as f64).collect()).unwrap().normalized().unwrap();
        let p = [0.3, -0.7];
        let mut last = 0.0;
        for a in [0.01, 0.05, 0.1, 0.3, 1.0, 5.0] {
            let m = grid_mass_in_circle(&g, p, a).unwrap();
            assert!(m >= last);
            last = m;
        }
    }

    #[test]
    fn misaligned_is_error() {
        let g = vec![StateGrid::uniform(spec()); 3];
        assert!(evaluate_grids(&g, &[[0.0, 0.0]; 2], &[0.3, 0.6, 0.9], 0, "x", 0.1).is_err());
        let rows = evaluate_grids(&g, &[[0.0, 0.0]; 3], &[0.3, 0.6, 0.9], 5, "x", 0.1).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].horizon_s, 0.9);
    }

    #[test]
    fn csv_round_trip_and_summary() {
        let rows = vec![
            EvalRow { track_id: 1, horizon_s: 0.3, predictor: "imm".into(), prob_mass: 0.5 },
            EvalRow { track_id: 2, horizon_s: 0.3, predictor: "imm".into(), prob_mass: 0.25 },
            EvalRow { track_id: 1, horizon_s: 0.3, predictor: "mdp".into(), prob_mass: 0.1 },
            EvalRow { track_id: 1, horizon_s: 0.1, predictor: "imm".into(), prob_mass: 1.0 },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eval.csv");
        write_eval_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("track_id,horizon_s,predictor,prob_mass\n"));
        assert_eq!(read_eval_csv(&path).unwrap(), rows);
        let s = summarize(&rows);
        assert_eq!(s.len(), 3);
        assert_eq!((s[0].predictor.as_str(), s[0].horizon_s), ("imm", 0.1));
        assert_eq!((s[1].mean_prob_mass, s[1].count), (0.375, 2));
        assert_eq!(s[2].predictor, "mdp");
    }
}
