//! Trajectory data model, geometry helpers and validation.
//!
//! Everything downstream (ingestion, simulation, injection, detectors, prompt
//! rendering) speaks in terms of [`Trajectory`] values made of [`StayPoint`]s.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius used for every distance in the crate.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// UTC epoch seconds.
pub type Timestamp = i64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Checked constructor; rejects non-finite or out-of-range coordinates.
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = GeoPoint { lat, lon };
        if p.is_valid() {
            Ok(p)
        } else {
            Err(Error::InvalidInput(format!("invalid coordinate ({lat}, {lon})")))
        }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

/// Semantic category of a visited place, e.g. `Pub` or `Workplace`.
///
/// Comparison is exact and case-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlaceType(String);

impl PlaceType {
    pub const APARTMENT: &'static str = "Apartment";
    pub const WORKPLACE: &'static str = "Workplace";
    pub const RESTAURANT: &'static str = "Restaurant";
    pub const PUB: &'static str = "Pub";
    pub const RECREATION: &'static str = "Recreation";
    pub const SHOP: &'static str = "Shop";
    pub const UNKNOWN: &'static str = "Unknown";

    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::InvalidInput("empty place type".into()));
        }
        Ok(PlaceType(name))
    }

    pub fn unknown() -> Self {
        PlaceType(Self::UNKNOWN.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_unknown(&self) -> bool {
        self.0 == Self::UNKNOWN
    }
}

impl fmt::Display for PlaceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StayPoint {
    pub arrive: Timestamp,
    pub depart: Timestamp,
    pub place_id: String,
    pub place_type: PlaceType,
    pub location: GeoPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub agent_id: String,
    pub points: Vec<StayPoint>,
}

impl Trajectory {
    pub fn new(agent_id: impl Into<String>, points: Vec<StayPoint>) -> Self {
        Trajectory { agent_id: agent_id.into(), points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    /// Free-form provenance (source, seed, config hash, ...).
    pub meta: BTreeMap<String, String>,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let ds = Dataset { trajectories, meta: BTreeMap::new() };
        ds.check_unique_ids()?;
        Ok(ds)
    }

    pub fn check_unique_ids(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for t in &self.trajectories {
            if !seen.insert(t.agent_id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate agent_id {}", t.agent_id)));
            }
        }
        Ok(())
    }

    pub fn get(&self, agent_id: &str) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.agent_id == agent_id)
    }

    pub fn agent_ids(&self) -> Vec<&str> {
        self.trajectories.iter().map(|t| t.agent_id.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutlierType {
    Imposter,
    Hunger,
    Social,
    Work,
    None,
}

impl OutlierType {
    pub fn as_str(&self) -> &'static str {
        match self {
            OutlierType::Imposter => "imposter",
            OutlierType::Hunger => "hunger",
            OutlierType::Social => "social",
            OutlierType::Work => "work",
            OutlierType::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Label {
    pub is_outlier: bool,
    pub outlier_type: OutlierType,
    /// Stay-point index where the deviation begins; present iff `is_outlier`.
    pub deviate_index: Option<usize>,
}

impl Label {
    pub fn normal() -> Self {
        Label { is_outlier: false, outlier_type: OutlierType::None, deviate_index: None }
    }

    pub fn outlier(outlier_type: OutlierType, deviate_index: usize) -> Self {
        Label { is_outlier: true, outlier_type, deviate_index: Some(deviate_index) }
    }
}

/// Ground-truth labels keyed by agent id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelSet {
    pub entries: BTreeMap<String, Label>,
}

impl LabelSet {
    pub fn get(&self, agent_id: &str) -> Option<&Label> {
        self.entries.get(agent_id)
    }

    pub fn insert(&mut self, agent_id: impl Into<String>, label: Label) {
        self.entries.insert(agent_id.into(), label);
    }

    pub fn is_outlier(&self, agent_id: &str) -> bool {
        self.entries.get(agent_id).is_some_and(|l| l.is_outlier)
    }

    pub fn n_outliers(&self) -> usize {
        self.entries.values().filter(|l| l.is_outlier).count()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks the label invariants against the dataset the labels describe.
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        for (id, label) in &self.entries {
            match (label.is_outlier, label.deviate_index) {
                (true, None) => {
                    return Err(Error::InvalidInput(format!("outlier {id} has no deviate_index")))
                }
                (false, Some(_)) => {
                    return Err(Error::InvalidInput(format!("normal agent {id} has a deviate_index")))
                }
                _ => {}
            }
            if let (Some(idx), Some(t)) = (label.deviate_index, ds.get(id)) {
                if idx >= t.len() {
                    return Err(Error::InvalidInput(format!(
                        "deviate_index {idx} out of range for {id} ({} points)",
                        t.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Great-circle distance in kilometres (haversine, mean Earth radius).
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> Result<f64> {
    if !(a.lat.is_finite() && a.lon.is_finite() && b.lat.is_finite() && b.lon.is_finite()) {
        return Err(Error::InvalidInput("non-finite coordinate".into()));
    }
    Ok(haversine_unchecked(a, b))
}

pub(crate) fn haversine_unchecked(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Position on the unit sphere: `(cos φ cos λ, cos φ sin λ, sin φ)`.
pub fn latlon_to_unit3(p: GeoPoint) -> Result<[f64; 3]> {
    if !p.is_valid() {
        return Err(Error::InvalidInput(format!("invalid coordinate ({}, {})", p.lat, p.lon)));
    }
    let (lat, lon) = (p.lat.to_radians(), p.lon.to_radians());
    Ok([lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()])
}

/// Sum of consecutive haversine distances over `range` (half-open point indices,
/// clamped to the trajectory). Empty or single-point ranges give 0.
pub fn total_travel_distance(t: &Trajectory, range: Option<std::ops::Range<usize>>) -> f64 {
    let range = range.unwrap_or(0..t.points.len());
    let end = range.end.min(t.points.len());
    let start = range.start.min(end);
    t.points[start..end]
        .windows(2)
        .map(|w| haversine_unchecked(w[0].location, w[1].location))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    /// `arrive` not strictly greater than the previous point's `arrive`.
    NonMonotonicArrive,
    /// `arrive` earlier than the previous point's `depart`.
    OverlapsPrevious,
    DepartBeforeArrive,
    InvalidLocation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "point {}: {:?}", self.index, self.kind)
    }
}

/// Returns every invariant violation in `t`; an empty list means the trajectory is valid.
pub fn validate_trajectory(t: &Trajectory) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, p) in t.points.iter().enumerate() {
        if !p.location.is_valid() {
            out.push(Violation { index: i, kind: ViolationKind::InvalidLocation });
        }
        if p.depart < p.arrive {
            out.push(Violation { index: i, kind: ViolationKind::DepartBeforeArrive });
        }
        if i > 0 {
            let prev = &t.points[i - 1];
            if p.arrive <= prev.arrive {
                out.push(Violation { index: i, kind: ViolationKind::NonMonotonicArrive });
            } else if p.arrive < prev.depart {
                out.push(Violation { index: i, kind: ViolationKind::OverlapsPrevious });
            }
        }
    }
    out
}
