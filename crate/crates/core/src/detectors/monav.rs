use serde::{Deserialize, Serialize};

use super::features::{bucket, DAY_SECS};
use super::split::SplitSpec;
use super::Aggregate;
use crate::model::{haversine_unchecked, Dataset, StayPoint};
use crate::scores::ScoreTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonavParams {
    pub window_secs: i64,
    pub sigma_floor_km: f64,
}

impl Default for MonavParams {
    fn default() -> Self {
        MonavParams { window_secs: DAY_SECS, sigma_floor_km: 1e-6 }
    }
}

fn window_distance(points: &[StayPoint]) -> f64 {
    points.windows(2).map(|w| haversine_unchecked(w[0].location, w[1].location)).sum()
}

/// Mean and sample standard deviation (floored).
pub fn mean_sigma(xs: &[f64], floor: f64) -> (f64, f64) {
    let n = xs.len() as f64;
    let mu = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0);
    (mu, var.sqrt().max(floor))
}

/// Travel-distance z-scores of test windows against the agent's train windows.
pub fn monav_tt_score(ds: &Dataset, split: &SplitSpec, params: &MonavParams, aggregate: Aggregate) -> ScoreTable {
    let mut table = ScoreTable::new("monav", "", "");
    for t in &ds.trajectories {
        let b = split.boundary(&t.agent_id).unwrap_or(0);
        let Some(first) = t.points.first() else {
            table.omit(&t.agent_id, "no stay points");
            continue;
        };
        let dists = |pts: &[StayPoint]| -> Vec<f64> {
            bucket(pts, first.arrive, params.window_secs).iter().map(|(_, _, w)| window_distance(w)).collect()
        };
        let train = dists(&t.points[..b]);
        let test = dists(&t.points[b..]);
        if train.len() < 2 {
            table.omit(&t.agent_id, "fewer than 2 train windows");
            continue;
        }
        if test.is_empty() {
            table.omit(&t.agent_id, "no test windows");
            continue;
        }
        let (mu, sigma) = mean_sigma(&train, params.sigma_floor_km);
        let z: Vec<f64> = test.iter().map(|d| (d - mu).abs() / sigma).collect();
        table.insert(&t.agent_id, aggregate.apply(&z));
    }
    table
}
