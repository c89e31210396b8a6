//! Canonical on-disk formats.
//!
//! * `dataset.jsonl`: one trajectory per line,
//!   `{"agent_id":..,"points":[{"arrive":..,"depart":..,"place_id":..,"place_type":..,"lat":..,"lon":..}]}`.
//!   Provenance metadata lives in a sidecar `dataset.meta.json` next to it.
//! * `labels.jsonl`: `{"agent_id":..,"is_outlier":..,"outlier_type":..,"deviate_index":..}`,
//!   one line per agent, ordered by agent id.
//!
//! Encoding is canonical: fixed field order and shortest round-trip floats, so
//! `encode(decode(encode(d))) == encode(d)` byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Dataset, GeoPoint, Label, LabelSet, OutlierType, PlaceType, StayPoint, Trajectory};

#[derive(Serialize, Deserialize)]
struct PointRecord {
    arrive: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depart: Option<i64>,
    place_id: String,
    place_type: String,
    lat: f64,
    lon: f64,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRecord {
    agent_id: String,
    points: Vec<PointRecord>,
}

#[derive(Serialize, Deserialize)]
struct LabelRecord {
    agent_id: String,
    is_outlier: bool,
    outlier_type: OutlierType,
    deviate_index: Option<usize>,
}

pub fn encode_dataset(ds: &Dataset) -> String {
    let mut out = String::new();
    for t in &ds.trajectories {
        let rec = TrajectoryRecord {
            agent_id: t.agent_id.clone(),
            points: t
                .points
                .iter()
                .map(|p| PointRecord {
                    arrive: p.arrive,
                    depart: Some(p.depart),
                    place_id: p.place_id.clone(),
                    place_type: p.place_type.as_str().to_string(),
                    lat: p.location.lat,
                    lon: p.location.lon,
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("trajectory record serializes"));
        out.push('\n');
    }
    out
}

/// Parses `dataset.jsonl` text. A missing `depart` defaults to `arrive`.
pub fn decode_dataset(text: &str) -> Result<Dataset> {
    let mut trajectories = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrajectoryRecord = serde_json::from_str(line)
            .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        let mut points = Vec::with_capacity(rec.points.len());
        for p in rec.points {
            let location = GeoPoint::new(p.lat, p.lon)
                .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            let place_type = PlaceType::new(p.place_type)
                .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            points.push(StayPoint {
                arrive: p.arrive,
                depart: p.depart.unwrap_or(p.arrive),
                place_id: p.place_id,
                place_type,
                location,
            });
        }
        trajectories.push(Trajectory { agent_id: rec.agent_id, points });
    }
    Dataset::new(trajectories)
}

pub fn encode_labels(labels: &LabelSet) -> String {
    let mut out = String::new();
    for (id, l) in &labels.entries {
        let rec = LabelRecord {
            agent_id: id.clone(),
            is_outlier: l.is_outlier,
            outlier_type: l.outlier_type,
            deviate_index: l.deviate_index,
        };
        out.push_str(&serde_json::to_string(&rec).expect("label record serializes"));
        out.push('\n');
    }
    out
}

pub fn decode_labels(text: &str) -> Result<LabelSet> {
    let mut labels = LabelSet::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: LabelRecord = serde_json::from_str(line)
            .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        if rec.is_outlier != rec.deviate_index.is_some() {
            return Err(Error::Parse {
                line: i + 1,
                message: "deviate_index must be present iff is_outlier".into(),
            });
        }
        labels.insert(
            rec.agent_id,
            Label { is_outlier: rec.is_outlier, outlier_type: rec.outlier_type, deviate_index: rec.deviate_index },
        );
    }
    Ok(labels)
}

/// `dir/dataset.jsonl` -> `dir/dataset.meta.json`.
pub fn meta_path(dataset_path: &Path) -> PathBuf {
    let stem = dataset_path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    dataset_path.with_file_name(format!("{stem}.meta.json"))
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write_file(path, encode_dataset(ds).as_bytes())?;
    let meta = serde_json::to_string_pretty(&ds.meta)? + "\n";
    write_file(&meta_path(path), meta.as_bytes())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = read_to_string(path)?;
    let mut ds = decode_dataset(&text)?;
    let mp = meta_path(path);
    if mp.exists() {
        let meta: BTreeMap<String, String> = serde_json::from_str(&read_to_string(&mp)?)?;
        ds.meta = meta;
    }
    Ok(ds)
}

pub fn write_labels(path: &Path, labels: &LabelSet) -> Result<()> {
    write_file(path, encode_labels(labels).as_bytes())
}

pub fn read_labels(path: &Path) -> Result<LabelSet> {
    decode_labels(&read_to_string(path)?)
}

/// Short content id of a dataset: the first 16 hex digits of the SHA-256 of its
/// canonical encoding (metadata excluded).
pub fn dataset_id(ds: &Dataset) -> String {
    sha256_hex(encode_dataset(ds).as_bytes())[..16].to_string()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        let point = (0i64..1000, 0i64..100, -90.0f64..90.0, -180.0f64..180.0, "[A-Za-z]{1,8}", "[a-z0-9:]{1,6}");
        let traj = prop::collection::vec(point, 0..6);
        prop::collection::vec(traj, 0..5).prop_map(|trajs| {
            let trajectories = trajs
                .into_iter()
                .enumerate()
                .map(|(i, pts)| {
                    let mut t = 0;
                    let points = pts
                        .into_iter()
                        .map(|(gap, dur, lat, lon, ty, id)| {
                            t += gap + 1;
                            let arrive = t;
                            t += dur;
                            StayPoint {
                                arrive,
                                depart: t,
                                place_id: id,
                                place_type: PlaceType::new(ty).unwrap(),
                                location: GeoPoint { lat, lon },
                            }
                        })
                        .collect();
                    Trajectory::new(format!("agent{i}"), points)
                })
                .collect();
            let mut ds = Dataset::new(trajectories).unwrap();
            ds.meta.insert("source".into(), "proptest".into());
            ds
        })
    }

    proptest! {
        #[test]
        fn dataset_round_trip_is_canonical(ds in arb_dataset()) {
            let text = encode_dataset(&ds);
            let back = decode_dataset(&text).unwrap();
            prop_assert_eq!(&back.trajectories, &ds.trajectories);
            prop_assert_eq!(encode_dataset(&back), text);
        }
    }

    #[test]
    fn missing_depart_defaults_to_arrive() {
        let line = r#"{"agent_id":"a","points":[{"arrive":5,"place_id":"x","place_type":"Pub","lat":1.0,"lon":2.0}]}"#;
        let ds = decode_dataset(line).unwrap();
        assert_eq!(ds.trajectories[0].points[0].depart, 5);
    }

    #[test]
    fn file_round_trip_with_meta() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.jsonl");
        let mut ds = Dataset::new(vec![Trajectory::new(
            "a",
            vec![StayPoint {
                arrive: 1,
                depart: 2,
                place_id: "p".into(),
                place_type: PlaceType::new("Pub").unwrap(),
                location: GeoPoint { lat: 39.9, lon: 116.4 },
            }],
        )])
        .unwrap();
        ds.meta.insert("seed".into(), "7".into());
        write_dataset(&path, &ds).unwrap();
        assert!(dir.path().join("dataset.meta.json").exists());
        assert_eq!(read_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn labels_round_trip() {
        let mut labels = LabelSet::default();
        labels.insert("b", Label::outlier(OutlierType::Imposter, 3));
        labels.insert("a", Label::normal());
        let text = encode_labels(&labels);
        assert_eq!(
            text,
            "{\"agent_id\":\"a\",\"is_outlier\":false,\"outlier_type\":\"none\",\"deviate_index\":null}\n\
             {\"agent_id\":\"b\",\"is_outlier\":true,\"outlier_type\":\"imposter\",\"deviate_index\":3}\n"
        );
        assert_eq!(decode_labels(&text).unwrap(), labels);
        assert!(decode_labels(r#"{"agent_id":"a","is_outlier":true,"outlier_type":"work","deviate_index":null}"#).is_err());
    }
}
