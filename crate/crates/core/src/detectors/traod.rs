use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::split::SplitSpec;
use crate::error::{Error, Result};
use crate::model::{Dataset, GeoPoint, EARTH_RADIUS_KM};
use crate::scores::ScoreTable;

const TRAOD_STREAM: u64 = 0x5452_414f;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraodParams {
    /// Neighbourhood radius D in km; estimated from the pool when unset.
    pub distance_km: Option<f64>,
    pub p_frac: f64,
    /// Outlying-length fraction at which an agent is flagged.
    pub fraction: f64,
    pub weights: [f64; 3],
    pub sample_pairs: usize,
    pub seed: u64,
}

impl Default for TraodParams {
    fn default() -> Self {
        TraodParams { distance_km: None, p_frac: 0.95, fraction: 0.2, weights: [1.0; 3], sample_pairs: 1000, seed: 0 }
    }
}

impl TraodParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(self.p_frac) || !unit(self.fraction) {
            return Err(Error::Config("traod p_frac and fraction must lie in (0, 1)".into()));
        }
        if self.distance_km.is_some_and(|d| !(d.is_finite() && d >= 0.0)) {
            return Err(Error::Config("traod distance_km must be finite and non-negative".into()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("traod weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Planar segment in km.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

fn sub(p: [f64; 2], q: [f64; 2]) -> [f64; 2] {
    [p[0] - q[0], p[1] - q[1]]
}

fn dot(p: [f64; 2], q: [f64; 2]) -> f64 {
    p[0] * q[0] + p[1] * q[1]
}

fn norm(p: [f64; 2]) -> f64 {
    dot(p, p).sqrt()
}

impl Segment {
    pub fn new(a: [f64; 2], b: [f64; 2]) -> Self {
        Segment { a, b }
    }

    pub fn length(&self) -> f64 {
        norm(sub(self.b, self.a))
    }

    /// Position of `p` along the segment's line, in units of the segment length.
    fn param(&self, p: [f64; 2]) -> f64 {
        let d = sub(self.b, self.a);
        dot(sub(p, self.a), d) / dot(d, d)
    }

    fn at(&self, t: f64) -> [f64; 2] {
        [self.a[0] + t * (self.b[0] - self.a[0]), self.a[1] + t * (self.b[1] - self.a[1])]
    }

    fn point_distance(&self, p: [f64; 2]) -> f64 {
        if self.length() == 0.0 {
            return norm(sub(p, self.a));
        }
        norm(sub(p, self.at(self.param(p).clamp(0.0, 1.0))))
    }
}

/// The three components (perpendicular, parallel, angular) of the segment distance.
pub fn traod_components(s1: &Segment, s2: &Segment) -> [f64; 3] {
    let (long, short) = if s1.length() >= s2.length() { (s1, s2) } else { (s2, s1) };
    let (ll, ls) = (long.length(), short.length());
    if ll == 0.0 {
        return [norm(sub(short.a, long.a)), 0.0, 0.0];
    }
    if ls == 0.0 {
        return [long.point_distance(short.a), 0.0, 0.0];
    }
    let (t1, t2) = (long.param(short.a), long.param(short.b));
    let l1 = norm(sub(short.a, long.at(t1)));
    let l2 = norm(sub(short.b, long.at(t2)));
    let perp = if l1 + l2 == 0.0 { 0.0 } else { (l1 * l1 + l2 * l2) / (l1 + l2) };
    let beyond = |t: f64| if t < 0.0 { -t * ll } else if t > 1.0 { (t - 1.0) * ll } else { 0.0 };
    let par = beyond(t1).min(beyond(t2));
    let (dl, ds) = (sub(long.b, long.a), sub(short.b, short.a));
    let cos = dot(dl, ds) / (ll * ls);
    let ang = if cos >= 0.0 {
        let cross = dl[0] * ds[1] - dl[1] * ds[0];
        ls * (cross.abs() / (ll * ls)).min(1.0)
    } else {
        ls
    };
    [perp, par, ang]
}

pub fn traod_segment_distance(s1: &Segment, s2: &Segment, weights: [f64; 3]) -> f64 {
    let c = traod_components(s1, s2);
    weights[0] * c[0] + weights[1] * c[1] + weights[2] * c[2]
}

/// Equirectangular projection to km about `origin`.
pub fn project(p: GeoPoint, origin: GeoPoint) -> [f64; 2] {
    let k = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
    [(p.lon - origin.lon) * k * origin.lat.to_radians().cos(), (p.lat - origin.lat) * k]
}

struct AgentSegments {
    id: String,
    pool: Vec<Segment>,
    test: Vec<Segment>,
}

fn agent_segments(ds: &Dataset, split: &SplitSpec) -> Vec<AgentSegments> {
    let mut trajs: Vec<_> = ds.trajectories.iter().collect();
    trajs.sort_by(|a, b| a.agent_id.cmp(&b.agent_id));
    let all: Vec<GeoPoint> = trajs.iter().flat_map(|t| t.points.iter().map(|p| p.location)).collect();
    let n = all.len().max(1) as f64;
    let origin = GeoPoint {
        lat: all.iter().map(|p| p.lat).sum::<f64>() / n,
        lon: all.iter().map(|p| p.lon).sum::<f64>() / n,
    };
    trajs
        .iter()
        .map(|t| {
            let xy: Vec<[f64; 2]> = t.points.iter().map(|p| project(p.location, origin)).collect();
            let b = split.boundary(&t.agent_id).unwrap_or(0).min(xy.len());
            let mut pool: Vec<Segment> = xy[..b].windows(2).map(|w| Segment::new(w[0], w[1])).collect();
            pool.sort_by(|x, y| {
                [x.a, x.b].concat().partial_cmp(&[y.a, y.b].concat()).unwrap_or(std::cmp::Ordering::Equal)
            });
            pool.dedup();
            // the leg into the first test point belongs to the test side
            let test = (b.max(1)..xy.len()).map(|i| Segment::new(xy[i - 1], xy[i])).collect();
            AgentSegments { id: t.agent_id.clone(), pool, test }
        })
        .collect()
}

/// D as the 10th percentile of segment distances over random pool pairs.
fn estimate_distance(agents: &[AgentSegments], params: &TraodParams) -> Result<f64> {
    let pool: Vec<&Segment> = agents.iter().flat_map(|a| &a.pool).collect();
    if pool.len() < 2 {
        return Err(Error::InvalidInput("traod needs at least 2 train segments to estimate D".into()));
    }
    let mut rng = crate::rng::stream(params.seed, TRAOD_STREAM);
    let mut d: Vec<f64> = (0..params.sample_pairs.max(1))
        .map(|_| {
            let i = rng.gen_range(0..pool.len());
            let mut j = rng.gen_range(0..pool.len() - 1);
            if j >= i {
                j += 1;
            }
            traod_segment_distance(pool[i], pool[j], params.weights)
        })
        .collect();
    d.sort_by(f64::total_cmp);
    let rank = ((0.1 * d.len() as f64).ceil() as usize).max(1) - 1;
    Ok(d[rank])
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraodResult {
    pub table: ScoreTable,
    pub distance_km: f64,
    /// Agents whose outlying length fraction reaches `fraction`.
    pub flagged: Vec<String>,
}

/// Segment-neighbourhood outliers against the pooled train segments of all agents.
pub fn traod_score(ds: &Dataset, split: &SplitSpec, params: &TraodParams) -> Result<TraodResult> {
    params.validate()?;
    if ds.trajectories.len() < 2 {
        return Err(Error::InvalidInput("traod needs at least 2 agents".into()));
    }
    let agents = agent_segments(ds, split);
    let d = match params.distance_km {
        Some(d) => d,
        None => estimate_distance(&agents, params)?,
    };
    let owners: Vec<usize> = (0..agents.len()).filter(|&i| !agents[i].pool.is_empty()).collect();

    let scored: Vec<(usize, Option<f64>)> = agents
        .par_iter()
        .enumerate()
        .map(|(ai, a)| {
            if a.test.is_empty() {
                return (ai, None);
            }
            let others = owners.iter().filter(|&&o| o != ai).count();
            let need = (1.0 - params.p_frac) * others as f64;
            let (mut out_len, mut total, mut out_n) = (0.0, 0.0, 0usize);
            for s in &a.test {
                let mut count = 0usize;
                for &o in owners.iter().filter(|&&o| o != ai) {
                    if count as f64 >= need {
                        break;
                    }
                    if agents[o].pool.iter().any(|q| traod_segment_distance(s, q, params.weights) <= d) {
                        count += 1;
                    }
                }
                let outlying = (count as f64) < need;
                total += s.length();
                if outlying {
                    out_len += s.length();
                    out_n += 1;
                }
            }
            let score = if total > 0.0 { out_len / total } else { out_n as f64 / a.test.len() as f64 };
            (ai, Some(score))
        })
        .collect();

    let mut table = ScoreTable::new("traod", "", "");
    let mut flagged = Vec::new();
    for (ai, s) in scored {
        match s {
            Some(s) => {
                if s >= params.fraction {
                    flagged.push(agents[ai].id.clone());
                }
                table.insert(&agents[ai].id, s);
            }
            None => table.omit(&agents[ai].id, "empty test side"),
        }
    }
    Ok(TraodResult { table, distance_km: d, flagged })
}
