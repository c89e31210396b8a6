use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::split::SplitSpec;
use crate::model::{latlon_to_unit3, Dataset, PlaceType, StayPoint, Timestamp};

pub const DAY_SECS: i64 = 86_400;
pub const WEEK_SECS: i64 = 7 * DAY_SECS;

/// How the 3D unit coordinates enter a window vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoordScaling {
    /// Raw unit-sphere vectors.
    Raw,
    /// Centered on the training mean and divided by the training RMS spread.
    #[default]
    Standardized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowOptions {
    pub window_secs: i64,
    pub seq_len: usize,
    pub coord_scaling: CoordScaling,
}

impl Default for WindowOptions {
    fn default() -> Self {
        WindowOptions { window_secs: WEEK_SECS, seq_len: 64, coord_scaling: CoordScaling::Standardized }
    }
}

/// Place types seen in training, in sorted order, followed by the Unknown bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    types: Vec<PlaceType>,
}

impl Vocabulary {
    pub fn from_types<'a>(types: impl IntoIterator<Item = &'a PlaceType>) -> Self {
        let mut v: Vec<PlaceType> = types.into_iter().filter(|t| !t.is_unknown()).cloned().collect();
        v.sort();
        v.dedup();
        Vocabulary { types: v }
    }

    /// Number of one-hot slots, Unknown included.
    pub fn len(&self) -> usize {
        self.types.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, t: &PlaceType) -> usize {
        self.types.binary_search(t).unwrap_or(self.types.len())
    }

    pub fn known(&self) -> &[PlaceType] {
        &self.types
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start: Timestamp,
    pub end: Timestamp,
    pub points: Vec<StayPoint>,
    pub vector: Vec<f64>,
}

impl Window {
    /// Normalized histogram over vocabulary slots.
    pub fn type_histogram(&self, vocab: &Vocabulary) -> Vec<f64> {
        let mut h = vec![0.0; vocab.len()];
        for p in &self.points {
            h[vocab.index(&p.place_type)] += 1.0;
        }
        let n = self.points.len().max(1) as f64;
        h.iter_mut().for_each(|x| *x /= n);
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentWindows {
    pub agent_id: String,
    pub train: Vec<Window>,
    pub test: Vec<Window>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedFeatures {
    pub vocab: Vocabulary,
    pub seq_len: usize,
    pub dim: usize,
    /// Sorted by agent id; only agents with a non-empty train side.
    pub agents: Vec<AgentWindows>,
    /// Agents left out, with the reason.
    pub ineligible: BTreeMap<String, String>,
}

struct CoordMap {
    center: [f64; 3],
    scale: f64,
}

impl CoordMap {
    fn apply(&self, p: &StayPoint) -> [f64; 3] {
        // locations were validated on read
        let u = latlon_to_unit3(p.location).unwrap_or([0.0; 3]);
        [0, 1, 2].map(|k| (u[k] - self.center[k]) / self.scale)
    }
}

fn coord_map(train: &[&StayPoint], scaling: CoordScaling) -> CoordMap {
    if scaling == CoordScaling::Raw || train.is_empty() {
        return CoordMap { center: [0.0; 3], scale: 1.0 };
    }
    let us: Vec<[f64; 3]> =
        train.iter().map(|p| latlon_to_unit3(p.location).unwrap_or([0.0; 3])).collect();
    let n = us.len() as f64;
    let mut c = [0.0; 3];
    for u in &us {
        for k in 0..3 {
            c[k] += u[k] / n;
        }
    }
    let ms: f64 = us.iter().map(|u| (0..3).map(|k| (u[k] - c[k]).powi(2)).sum::<f64>()).sum::<f64>() / n;
    CoordMap { center: c, scale: ms.sqrt().max(1e-12) }
}

/// Groups `points` into windows of `window_secs` counted from `t0`; empty windows never appear.
pub fn bucket(points: &[StayPoint], t0: Timestamp, window_secs: i64) -> Vec<(Timestamp, Timestamp, Vec<StayPoint>)> {
    let mut out: Vec<(i64, Vec<StayPoint>)> = Vec::new();
    for p in points {
        let w = (p.arrive - t0).div_euclid(window_secs);
        match out.last_mut() {
            Some((lw, v)) if *lw == w => v.push(p.clone()),
            _ => out.push((w, vec![p.clone()])),
        }
    }
    out.into_iter()
        .map(|(w, v)| {
            let start = v[0].arrive;
            let end = v.last().map(|p| p.depart).unwrap_or(start);
            debug_assert!(start >= t0 + w * window_secs);
            (start, end, v)
        })
        .collect()
}

fn encode(points: &[StayPoint], vocab: &Vocabulary, coords: &CoordMap, seq_len: usize) -> Vec<f64> {
    let width = vocab.len() + 3;
    let mut v = vec![0.0; seq_len * width];
    for (i, p) in points.iter().take(seq_len).enumerate() {
        let row = &mut v[i * width..(i + 1) * width];
        row[vocab.index(&p.place_type)] = 1.0;
        row[vocab.len()..].copy_from_slice(&coords.apply(p));
    }
    v
}

/// Buckets every agent's train and test sides into windows and encodes each
/// window as `seq_len` rows of one-hot type plus 3D coordinates.
pub fn build_windows(ds: &Dataset, split: &SplitSpec, opts: &WindowOptions) -> crate::Result<WindowedFeatures> {
    if opts.window_secs <= 0 || opts.seq_len == 0 {
        return Err(crate::Error::Config("window_secs and seq_len must be positive".into()));
    }
    let mut sides = Vec::new();
    let mut ineligible = BTreeMap::new();
    for t in &ds.trajectories {
        let b = split
            .boundary(&t.agent_id)
            .ok_or_else(|| crate::Error::InvalidInput(format!("split has no entry for agent {}", t.agent_id)))?;
        if b == 0 {
            ineligible.insert(t.agent_id.clone(), "empty train side".to_string());
            continue;
        }
        sides.push((t, b));
    }
    // agent order fixes float summation order below
    sides.sort_by(|a, b| a.0.agent_id.cmp(&b.0.agent_id));
    let train_points: Vec<&StayPoint> = sides.iter().flat_map(|(t, b)| &t.points[..*b]).collect();
    let vocab = Vocabulary::from_types(train_points.iter().map(|p| &p.place_type));
    let coords = coord_map(&train_points, opts.coord_scaling);

    let agents: Vec<AgentWindows> = sides
        .iter()
        .map(|(t, b)| {
            let t0 = t.points[0].arrive;
            let mk = |pts: &[StayPoint]| -> Vec<Window> {
                bucket(pts, t0, opts.window_secs)
                    .into_iter()
                    .map(|(start, end, points)| {
                        let vector = encode(&points, &vocab, &coords, opts.seq_len);
                        Window { start, end, points, vector }
                    })
                    .collect()
            };
            AgentWindows { agent_id: t.agent_id.clone(), train: mk(&t.points[..*b]), test: mk(&t.points[*b..]) }
        })
        .collect();
    let dim = opts.seq_len * (vocab.len() + 3);
    Ok(WindowedFeatures { vocab, seq_len: opts.seq_len, dim, agents, ineligible })
}
