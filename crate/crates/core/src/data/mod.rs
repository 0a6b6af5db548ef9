//! Scenario ingestion: JSONL load/save with validation, segmentation of
//! long recordings, and the synthetic scenario generator.

pub mod import;
pub mod synthetic;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scene::Scenario;

pub use synthetic::{generate_synthetic, parse_mix, registry, Archetype, GenSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ScenarioRecord {
    schema_version: u32,
    #[serde(flatten)]
    scenario: Scenario,
}

/// Result of loading a corpus: valid scenarios plus line-level diagnostics
/// for every rejected record.
pub struct LoadOutcome {
    pub scenarios: Vec<Scenario>,
    pub warnings: Vec<String>,
}

/// Load a JSONL corpus. Malformed records are rejected with line-level
/// diagnostics; an empty file yields an empty list with a warning.
pub fn load(path: &Path) -> Result<LoadOutcome> {
    let reader = BufReader::new(File::open(path)?);
    let mut scenarios = Vec::new();
    let mut warnings = Vec::new();
    let mut lines = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        lines += 1;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let record: ScenarioRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                warnings.push(format!("line {}: invalid record: {}", lineno, e));
                continue;
            }
        };
        if record.schema_version != SCHEMA_VERSION {
            warnings.push(format!(
                "line {}: unsupported schema version {} (expected {})",
                lineno, record.schema_version, SCHEMA_VERSION
            ));
            continue;
        }
        if let Err(e) = record.scenario.validate() {
            warnings.push(format!("line {}: {}", lineno, e));
            continue;
        }
        scenarios.push(record.scenario);
    }
    if lines == 0 {
        warnings.push(format!("{}: empty corpus file", path.display()));
    }
    Ok(LoadOutcome { scenarios, warnings })
}

pub fn save(path: &Path, scenarios: &[Scenario]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for sc in scenarios {
        let record = ScenarioRecord { schema_version: SCHEMA_VERSION, scenario: sc.clone() };
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Sliding-window segmentation of a long recording. Windows where the ego
/// is not valid throughout are dropped. A too-short scenario yields an
/// empty list.
pub fn segment(scenario: &Scenario, obs_len: usize, horizon_len: usize, stride: usize) -> Vec<Scenario> {
    let window = obs_len + horizon_len;
    let total = scenario.ego_track().states.len();
    if total < window || stride == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut k = 0usize;
    while start + window <= total {
        let ego_ok = scenario.ego_track().valid_over(start, start + window);
        if ego_ok {
            let tracks = scenario
                .tracks
                .iter()
                .filter_map(|t| {
                    if t.states.len() < start + window {
                        return None;
                    }
                    let states = t.states[start..start + window].to_vec();
                    let valid = t.valid[start..start + window].to_vec();
                    if !valid.iter().any(|&v| v) {
                        return None;
                    }
                    Some(crate::scene::AgentTrack { agent_id: t.agent_id.clone(), class: t.class, states, valid })
                })
                .collect();
            let seg = Scenario {
                id: format!("{}#seg{}", scenario.id, k),
                sample_rate: scenario.sample_rate,
                polylines: scenario.polylines.clone(),
                tracks,
                ego_id: scenario.ego_id.clone(),
                observation_len: obs_len,
                horizon_len,
            };
            if seg.validate().is_ok() {
                out.push(seg);
            }
        }
        start += stride;
        k += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::KinematicState;
    use crate::scene::{AgentTrack, MapPolyline, ObjectClass, PolylineKind};

    fn long_scenario(steps: usize) -> Scenario {
        let states = (0..steps)
            .map(|i| KinematicState { x: 0.5 * i as f64, y: 0.0, heading: 0.0, speed: 5.0 })
            .collect();
        Scenario {
            id: "long".into(),
            sample_rate: 10.0,
            polylines: vec![MapPolyline {
                id: "l".into(),
                kind: PolylineKind::LaneCenterline,
                points: vec![[-10.0, 0.0], [200.0, 0.0]],
            }],
            tracks: vec![AgentTrack {
                agent_id: "ego".into(),
                class: ObjectClass::Vehicle,
                states,
                valid: vec![true; steps],
            }],
            ego_id: "ego".into(),
            observation_len: 40,
            horizon_len: 60,
        }
    }

    #[test]
    fn segment_arithmetic() {
        let sc = long_scenario(110);
        let segs = segment(&sc, 40, 60, 10);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].id, "long#seg0");
    }

    #[test]
    fn large_stride_gives_one_segment() {
        let sc = long_scenario(110);
        let segs = segment(&sc, 40, 60, 200);
        assert_eq!(segs.len(), 1);
    }

    #[test]
    fn too_short_gives_empty() {
        let sc = long_scenario(110);
        assert!(segment(&sc, 80, 60, 10).is_empty());
    }

    #[test]
    fn empty_file_warns() {
        let dir = std::env::temp_dir().join(format!("vrd-data-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("empty.jsonl");
        std::fs::write(&p, "").unwrap();
        let out = load(&p).unwrap();
        assert!(out.scenarios.is_empty());
        assert_eq!(out.warnings.len(), 1);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn short_polyline_rejected_with_diagnostic() {
        let dir = std::env::temp_dir().join(format!("vrd-data2-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("bad.jsonl");
        let mut sc = long_scenario(110);
        sc.polylines[0].points.truncate(1);
        let record = ScenarioRecord { schema_version: SCHEMA_VERSION, scenario: sc };
        std::fs::write(&p, format!("{}\n", serde_json::to_string(&record).unwrap())).unwrap();
        let out = load(&p).unwrap();
        assert!(out.scenarios.is_empty());
        assert!(out.warnings[0].contains("line 1"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn save_load_round_trip() {
        let dir = std::env::temp_dir().join(format!("vrd-data3-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("corpus.jsonl");
        let scenarios = vec![long_scenario(110), long_scenario(120)];
        save(&p, &scenarios).unwrap();
        let out = load(&p).unwrap();
        assert!(out.warnings.is_empty());
        assert_eq!(out.scenarios, scenarios);
        std::fs::remove_dir_all(&dir).ok();
    }
}
