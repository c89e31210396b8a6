//! Raw GPS log ingestion: GeoLife `.plt` / flat CSV parsing, stay-point
//! extraction, POI-based semantic labelling and sparse-agent filtering.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::io::read_to_string;
use crate::model::{haversine_unchecked, Dataset, GeoPoint, PlaceType, StayPoint, Timestamp, Trajectory};

/// Number of header lines at the top of every GeoLife `.plt` file.
const PLT_HEADER_LINES: usize = 6;

/// Grid size (degrees) for the fallback place id of unlabelled stay points.
const CELL_DEG: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawFix {
    pub timestamp: Timestamp,
    pub location: GeoPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawFormat {
    /// GeoLife per-file layout: 6 header lines then `lat,lon,0,alt,days,date,time`.
    Plt,
    /// `agent_id,timestamp,lat,lon`, all agents in one file.
    Csv,
}

impl FromStr for RawFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plt" => Ok(RawFormat::Plt),
            "csv" => Ok(RawFormat::Csv),
            other => Err(Error::Config(format!("unknown raw format {other:?} (expected plt|csv)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StayPointParams {
    pub dist_threshold_m: f64,
    pub time_threshold_s: i64,
}

impl Default for StayPointParams {
    fn default() -> Self {
        StayPointParams { dist_threshold_m: 200.0, time_threshold_s: 1200 }
    }
}

impl StayPointParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dist_threshold_m > 0.0) || self.time_threshold_s <= 0 {
            return Err(Error::Config("stay-point thresholds must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PoiEntry {
    pub lat: f64,
    pub lon: f64,
    pub radius_m: f64,
    pub place_type: String,
    pub place_id: String,
}

impl PoiEntry {
    fn center(&self) -> GeoPoint {
        GeoPoint { lat: self.lat, lon: self.lon }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoiMap {
    entries: Vec<PoiEntry>,
}

impl PoiMap {
    pub fn new(entries: Vec<PoiEntry>) -> Result<Self> {
        let mut ids = HashSet::new();
        for e in &entries {
            if !(e.radius_m > 0.0) {
                return Err(Error::InvalidInput(format!("POI {} has non-positive radius", e.place_id)));
            }
            if !e.center().is_valid() {
                return Err(Error::InvalidInput(format!("POI {} has invalid center", e.place_id)));
            }
            if e.place_type.is_empty() {
                return Err(Error::InvalidInput(format!("POI {} has empty type", e.place_id)));
            }
            if !ids.insert(e.place_id.clone()) {
                return Err(Error::InvalidInput(format!("duplicate POI id {}", e.place_id)));
            }
        }
        Ok(PoiMap { entries })
    }

    /// Reads `{lat, lon, radius_m, place_type, place_id}` JSONL.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            entries.push(
                serde_json::from_str(line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?,
            );
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> &[PoiEntry] {
        &self.entries
    }
}

/// Parses one raw log. Plt files carry no agent id, so every fix is attributed
/// to `agent_id`; CSV rows name their own agent. Fixes come back time-sorted.
pub fn parse_raw_log(bytes: &[u8], format: RawFormat, agent_id: &str) -> Result<BTreeMap<String, Vec<RawFix>>> {
    let text = String::from_utf8_lossy(bytes);
    let mut out: BTreeMap<String, Vec<RawFix>> = BTreeMap::new();
    let mut total = 0usize;
    let mut malformed = 0usize;

    let lines: Box<dyn Iterator<Item = &str>> = match format {
        RawFormat::Plt => Box::new(text.lines().skip(PLT_HEADER_LINES)),
        RawFormat::Csv => Box::new(text.lines()),
    };
    for (n, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if format == RawFormat::Csv && n == 0 && line.starts_with("agent_id") {
            continue;
        }
        total += 1;
        let parsed = match format {
            RawFormat::Plt => parse_plt_record(line).map(|f| (agent_id.to_string(), f)),
            RawFormat::Csv => parse_csv_record(line),
        };
        match parsed {
            Some((agent, fix)) => out.entry(agent).or_default().push(fix),
            None => malformed += 1,
        }
    }
    if malformed * 2 > total {
        return Err(Error::CorruptInput { malformed, total });
    }
    if malformed > 0 {
        log::warn!("skipped {malformed} of {total} malformed lines");
    }
    for fixes in out.values_mut() {
        fixes.sort_by_key(|f| f.timestamp);
    }
    Ok(out)
}

fn parse_plt_record(line: &str) -> Option<RawFix> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 7 {
        return None;
    }
    let lat: f64 = fields[0].parse().ok()?;
    let lon: f64 = fields[1].parse().ok()?;
    // fields[2] is always 0, fields[3] altitude (feet), fields[4] fractional days; unused
    let date = NaiveDate::parse_from_str(fields[5], "%Y-%m-%d").ok()?;
    let time = NaiveTime::parse_from_str(fields[6], "%H:%M:%S").ok()?;
    let location = GeoPoint::new(lat, lon).ok()?;
    Some(RawFix { timestamp: NaiveDateTime::new(date, time).and_utc().timestamp(), location })
}

fn parse_csv_record(line: &str) -> Option<(String, RawFix)> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 4 || fields[0].is_empty() {
        return None;
    }
    let timestamp: i64 = fields[1].parse().ok()?;
    let location = GeoPoint::new(fields[2].parse().ok()?, fields[3].parse().ok()?).ok()?;
    Some((fields[0].to_string(), RawFix { timestamp, location }))
}

/// Two-threshold stay-point scan over time-sorted fixes.
///
/// Starting from an anchor fix, the run extends while fixes stay within
/// `dist_threshold_m` of the anchor; if the run spans at least
/// `time_threshold_s` it becomes one stay point at the mean coordinate and the
/// scan resumes after the run, otherwise the anchor advances by one fix.
pub fn detect_stay_points(fixes: &[RawFix], params: &StayPointParams) -> Vec<StayPoint> {
    let mut out = Vec::new();
    let n = fixes.len();
    let mut i = 0;
    while i < n {
        let anchor = fixes[i];
        let mut j = i + 1;
        while j < n && haversine_unchecked(anchor.location, fixes[j].location) * 1000.0 <= params.dist_threshold_m {
            j += 1;
        }
        let last = fixes[j - 1];
        if last.timestamp - anchor.timestamp >= params.time_threshold_s {
            let run = &fixes[i..j];
            let k = run.len() as f64;
            let location = GeoPoint {
                lat: run.iter().map(|f| f.location.lat).sum::<f64>() / k,
                lon: run.iter().map(|f| f.location.lon).sum::<f64>() / k,
            };
            out.push(StayPoint {
                arrive: anchor.timestamp,
                depart: last.timestamp,
                place_id: cell_id(location),
                place_type: PlaceType::unknown(),
                location,
            });
            i = j;
        } else {
            i += 1;
        }
    }
    out
}

/// Deterministic grid-cell id used for stay points outside every POI.
pub fn cell_id(p: GeoPoint) -> String {
    format!("cell:{}:{}", (p.lat / CELL_DEG).floor() as i64, (p.lon / CELL_DEG).floor() as i64)
}

/// Labels each stay point with the nearest POI whose circle contains it
/// (ties: smaller distance, then smaller place id). Points outside every
/// circle become `Unknown` with a grid-cell place id.
pub fn assign_place_types(points: &[StayPoint], poi: &PoiMap) -> Vec<StayPoint> {
    points
        .iter()
        .map(|p| {
            let best = poi
                .entries
                .iter()
                .filter_map(|e| {
                    let d_m = haversine_unchecked(p.location, e.center()) * 1000.0;
                    (d_m <= e.radius_m).then_some((d_m, e))
                })
                .min_by(|(da, ea), (db, eb)| da.total_cmp(db).then_with(|| ea.place_id.cmp(&eb.place_id)));
            let mut q = p.clone();
            match best {
                Some((_, e)) => {
                    q.place_type = PlaceType::new(e.place_type.clone()).expect("validated non-empty");
                    q.place_id = e.place_id.clone();
                }
                None => {
                    q.place_type = PlaceType::unknown();
                    q.place_id = cell_id(p.location);
                }
            }
            q
        })
        .collect()
}

/// Keeps trajectories with at least `min_points` stay points, preserving order.
pub fn filter_min_records(ds: &Dataset, min_points: usize) -> Dataset {
    Dataset {
        trajectories: ds.trajectories.iter().filter(|t| t.len() >= min_points).cloned().collect(),
        meta: ds.meta.clone(),
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub format: RawFormat,
    pub stay: StayPointParams,
    pub min_records: usize,
    pub poi: PoiMap,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { format: RawFormat::Plt, stay: StayPointParams::default(), min_records: 50, poi: PoiMap::default() }
    }
}

/// Loads raw logs from `input` (a GeoLife-style directory of per-agent folders
/// for plt, or a single CSV file) and runs the whole ingestion chain.
pub fn ingest_path(input: &Path, opts: &IngestOptions) -> Result<Dataset> {
    opts.stay.validate()?;
    let per_agent = match opts.format {
        RawFormat::Csv => {
            let bytes = std::fs::read(input).map_err(|e| Error::io(input, e))?;
            parse_raw_log(&bytes, RawFormat::Csv, "")?
        }
        RawFormat::Plt => load_plt_tree(input)?,
    };
    let trajectories: Vec<Trajectory> = per_agent
        .into_par_iter()
        .map(|(agent, fixes)| {
            let stays = detect_stay_points(&fixes, &opts.stay);
            Trajectory::new(agent, assign_place_types(&stays, &opts.poi))
        })
        .collect();
    let mut ds = Dataset::new(trajectories)?;
    let before = ds.trajectories.len();
    ds = filter_min_records(&ds, opts.min_records);
    log::info!("ingested {before} agents, kept {} with >= {} stay points", ds.trajectories.len(), opts.min_records);
    ds.meta.insert("source".into(), input.display().to_string());
    ds.meta.insert("format".into(), format!("{:?}", opts.format).to_lowercase());
    Ok(ds)
}

fn load_plt_tree(root: &Path) -> Result<BTreeMap<String, Vec<RawFix>>> {
    let mut agents = BTreeMap::new();
    let mut dirs: Vec<_> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .collect();
    dirs.sort_by_key(|e| e.file_name());
    for dir in dirs {
        let agent = dir.file_name().to_string_lossy().into_owned();
        let mut files: Vec<_> = walkdir::WalkDir::new(dir.path())
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "plt"))
            .map(|e| e.into_path())
            .collect();
        files.sort();
        let mut fixes = Vec::new();
        for f in files {
            let text = read_to_string(&f)?;
            let mut parsed = parse_raw_log(text.as_bytes(), RawFormat::Plt, &agent)?;
            fixes.extend(parsed.remove(&agent).unwrap_or_default());
        }
        fixes.sort_by_key(|f| f.timestamp);
        agents.insert(agent, fixes);
    }
    Ok(agents)
}
