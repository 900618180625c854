//! Dataset directories: one scenario record and one track record per line,
//! plus a map file per scenario.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{FeatureMap, GridFileKind};

use super::{Scenario, ScenarioParams, Track};

pub const SCENARIOS_FILE: &str = "scenarios.jsonl";
pub const TRACKS_FILE: &str = "tracks.jsonl";
pub const MAP_PREFIX: &str = "scenario_";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRecord {
    id: u64,
    seed: u64,
    params: ScenarioParams,
}

fn map_name(id: u64) -> String {
    format!("{MAP_PREFIX}{id}.map")
}

fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: k + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn write_lines<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut f, &item).map_err(std::io::Error::from)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Track records of a single file, in file order.
pub fn read_tracks(path: impl AsRef<Path>) -> Result<Vec<Track>> {
    read_lines(path.as_ref())
}

pub fn write_dataset(dir: impl AsRef<Path>, scenarios: &[Scenario]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_lines(
        &dir.join(SCENARIOS_FILE),
        scenarios.iter().map(|s| ScenarioRecord {
            id: s.id,
            seed: s.seed,
            params: s.params.clone(),
        }),
    )?;
    write_lines(&dir.join(TRACKS_FILE), scenarios.iter().flat_map(|s| s.tracks.iter()))?;
    for s in scenarios {
        s.map.write(dir.join(map_name(s.id)), GridFileKind::Text)?;
    }
    Ok(())
}

/// Scenarios in file order, each with its tracks in file order.
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Vec<Scenario>> {
    let dir = dir.as_ref();
    let records: Vec<ScenarioRecord> = read_lines(&dir.join(SCENARIOS_FILE))?;
    let tracks_path = dir.join(TRACKS_FILE);
    let tracks: Vec<Track> = if tracks_path.exists() || !records.is_empty() {
        read_lines(&tracks_path)?
    } else {
        Vec::new()
    };
    let mut by_scenario: BTreeMap<u64, Vec<Track>> = BTreeMap::new();
    for t in tracks {
        by_scenario.entry(t.scenario).or_default().push(t);
    }
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let map = FeatureMap::read(dir.join(map_name(r.id)))?;
        let s = Scenario {
            id: r.id,
            seed: r.seed,
            params: r.params,
            map,
            tracks: by_scenario.remove(&r.id).unwrap_or_default(),
        };
        s.validate()?;
        out.push(s);
    }
    if let Some((id, ts)) = by_scenario.into_iter().next() {
        return Err(crate::error::invalid(format!("track {} refers to unknown scenario {id}", ts[0].id)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenariolab::{generate_dataset, WorldKind};

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = ScenarioParams {
            width: 16,
            height: 16,
            tracks: 2,
            min_path: 8,
            ..Default::default()
        };
        let mut d = generate_dataset(3, 50, &p).unwrap();
        d[1].tracks[0].features = None;
        d[2].params.kind = WorldKind::Detour;
        write_dataset(dir.path(), &d).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), d);
    }

    #[test]
    fn empty_files_give_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(SCENARIOS_FILE), "").unwrap();
        fs::write(dir.path().join(TRACKS_FILE), "").unwrap();
        assert!(read_dataset(dir.path()).unwrap().is_empty());
        assert!(read_tracks(dir.path().join(TRACKS_FILE)).unwrap().is_empty());
    }

    #[test]
    fn truncated_record_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = ScenarioParams {
            width: 16,
            height: 16,
            tracks: 3,
            min_path: 8,
            ..Default::default()
        };
        write_dataset(dir.path(), &generate_dataset(1, 1, &p).unwrap()).unwrap();
        let path = dir.path().join(TRACKS_FILE);
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let cut = &lines[1][..lines[1].len() / 2];
        lines[1] = cut;
        fs::write(&path, lines.join("\n")).unwrap();
        match read_dataset(dir.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
