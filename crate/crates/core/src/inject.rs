//! Imposter outlier injection: agent pairs exchange their trajectory tails
//! after a common switch time anchored at a fixed fraction of the first
//! agent's stay points.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{validate_trajectory, Dataset, Label, LabelSet, OutlierType, StayPoint, Timestamp};

const INJECT_STREAM: u64 = 0x494e_4a45;
/// Pair draws allowed per requested pair before giving up.
pub const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct InjectConfig {
    pub n_outlier_pairs: usize,
    pub switch_fraction: f64,
    pub seed: u64,
}

impl Default for InjectConfig {
    fn default() -> Self {
        InjectConfig { n_outlier_pairs: 12, switch_fraction: 0.8, seed: 0 }
    }
}

impl InjectConfig {
    pub fn validate(&self, n_agents: usize) -> Result<()> {
        if !(self.switch_fraction > 0.0 && self.switch_fraction < 1.0) {
            return Err(Error::Config("switch_fraction must be in (0, 1)".into()));
        }
        if 2 * self.n_outlier_pairs > n_agents {
            return Err(Error::Config(format!(
                "{} pairs need {} agents, dataset has {n_agents}",
                self.n_outlier_pairs,
                2 * self.n_outlier_pairs
            )));
        }
        Ok(())
    }
}

/// Switch time for agent `points`: departure of the last point before index
/// `floor(fraction * len)`. `None` when that index is 0.
pub fn switch_time(points: &[StayPoint], fraction: f64) -> Option<Timestamp> {
    let k = (fraction * points.len() as f64).floor() as usize;
    (k >= 1).then(|| points[k - 1].depart)
}

struct Swap {
    a: Vec<StayPoint>,
    b: Vec<StayPoint>,
    deviate_a: usize,
    deviate_b: usize,
}

/// Exchanges every point arriving at or after `cut` between the two agents.
fn try_swap(a: &[StayPoint], b: &[StayPoint], cut: Timestamp) -> Option<Swap> {
    let ka = a.partition_point(|p| p.arrive < cut);
    let kb = b.partition_point(|p| p.arrive < cut);
    if ka == 0 || kb == 0 || ka == a.len() || kb == b.len() {
        // each side must keep a history and receive a tail
        return None;
    }
    let new_a: Vec<StayPoint> = a[..ka].iter().chain(&b[kb..]).cloned().collect();
    let new_b: Vec<StayPoint> = b[..kb].iter().chain(&a[ka..]).cloned().collect();
    let ok = |pts: &[StayPoint]| validate_trajectory(&crate::model::Trajectory::new("", pts.to_vec())).is_empty();
    (ok(&new_a) && ok(&new_b)).then_some(Swap { a: new_a, b: new_b, deviate_a: ka, deviate_b: kb })
}

/// Injects `cfg.n_outlier_pairs` imposter pairs and labels every agent.
///
/// Pairs are drawn uniformly from agents not yet paired; a draw whose exchange
/// would move nothing or break timestamp ordering is discarded and redrawn,
/// up to [`MAX_ATTEMPTS`] draws per pair.
pub fn inject_imposter(ds: &Dataset, cfg: &InjectConfig) -> Result<(Dataset, LabelSet)> {
    cfg.validate(ds.trajectories.len())?;
    let mut rng = crate::rng::stream(cfg.seed, INJECT_STREAM);
    let mut out = ds.clone();
    let mut labels = LabelSet::default();
    for t in &ds.trajectories {
        labels.insert(t.agent_id.clone(), Label::normal());
    }

    let mut free: Vec<usize> = (0..ds.trajectories.len()).collect();
    free.shuffle(&mut rng);
    for pair in 0..cfg.n_outlier_pairs {
        let mut done = false;
        for _ in 0..MAX_ATTEMPTS {
            let i = rng.gen_range(0..free.len());
            let mut j = rng.gen_range(0..free.len() - 1);
            if j >= i {
                j += 1;
            }
            let (ia, ib) = (free[i], free[j]);
            let (a, b) = (&ds.trajectories[ia].points, &ds.trajectories[ib].points);
            let Some(cut) = switch_time(a, cfg.switch_fraction) else { continue };
            let Some(swap) = try_swap(a, b, cut) else { continue };

            labels.insert(ds.trajectories[ia].agent_id.clone(), Label::outlier(OutlierType::Imposter, swap.deviate_a));
            labels.insert(ds.trajectories[ib].agent_id.clone(), Label::outlier(OutlierType::Imposter, swap.deviate_b));
            out.trajectories[ia].points = swap.a;
            out.trajectories[ib].points = swap.b;
            free.retain(|&x| x != ia && x != ib);
            done = true;
            break;
        }
        if !done {
            return Err(Error::Injection(format!(
                "no valid partner found for pair {} after {MAX_ATTEMPTS} attempts",
                pair + 1
            )));
        }
    }

    // labels are replaced wholesale, so an upstream onset no longer describes them
    out.meta.remove("onset_timestamp");
    out.meta.insert("inject_pairs".into(), cfg.n_outlier_pairs.to_string());
    out.meta.insert("inject_seed".into(), cfg.seed.to_string());
    out.meta.insert("split_fraction".into(), cfg.switch_fraction.to_string());
    Ok((out, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GeoPoint, PlaceType, Trajectory};

    fn pt(arrive: i64, depart: i64, id: &str) -> StayPoint {
        StayPoint {
            arrive,
            depart,
            place_id: id.into(),
            place_type: PlaceType::new("Pub").unwrap(),
            location: GeoPoint { lat: 0.0, lon: 0.0 },
        }
    }

    fn ten(agent: &str, offset: i64) -> Trajectory {
        let pts = (0..10).map(|k| pt(k * 100 + offset, k * 100 + offset + 50, &format!("{agent}{k}"))).collect();
        Trajectory::new(agent, pts)
    }

    #[test]
    fn eighty_percent_rule() {
        let ds = Dataset::new(vec![ten("a", 0), ten("b", 10)]).unwrap();
        let (out, labels) = inject_imposter(&ds, &InjectConfig { n_outlier_pairs: 1, switch_fraction: 0.8, seed: 1 }).unwrap();
        // the cut is the 8th point's departure of whichever agent was drawn first; both keep 8 points
        for t in &out.trajectories {
            assert_eq!(t.points.len(), 10);
            assert_eq!(labels.get(&t.agent_id).unwrap().deviate_index, Some(8));
            let own = &t.agent_id;
            assert!(t.points[..8].iter().all(|p| p.place_id.starts_with(own.as_str())));
            assert!(t.points[8..].iter().all(|p| !p.place_id.starts_with(own.as_str())));
            assert!(validate_trajectory(t).is_empty());
        }
        assert_eq!(labels.n_outliers(), 2);
    }

    #[test]
    fn nothing_moves_means_failure() {
        // b ends before a's switch time, so no draw can work
        let a = ten("a", 10_000);
        let b = ten("b", 0);
        let ds = Dataset::new(vec![a, b]).unwrap();
        let err = inject_imposter(&ds, &InjectConfig { n_outlier_pairs: 1, switch_fraction: 0.5, seed: 3 });
        assert!(matches!(err, Err(Error::Injection(_))));
    }

    #[test]
    fn deterministic_and_untouched_normals() {
        let ds = Dataset::new((0..8).map(|i| ten(&format!("g{i}"), i * 7)).collect()).unwrap();
        let cfg = InjectConfig { n_outlier_pairs: 2, switch_fraction: 0.8, seed: 11 };
        let (o1, l1) = inject_imposter(&ds, &cfg).unwrap();
        let (o2, l2) = inject_imposter(&ds, &cfg).unwrap();
        assert_eq!(o1, o2);
        assert_eq!(l1, l2);
        assert_eq!(l1.n_outliers(), 4);
        for (before, after) in ds.trajectories.iter().zip(&o1.trajectories) {
            if !l1.is_outlier(&before.agent_id) {
                assert_eq!(before, after);
            }
        }
    }

    #[test]
    fn config_errors() {
        let ds = Dataset::new(vec![ten("a", 0), ten("b", 0)]).unwrap();
        assert!(inject_imposter(&ds, &InjectConfig { n_outlier_pairs: 2, ..Default::default() }).is_err());
        assert!(inject_imposter(&ds, &InjectConfig { n_outlier_pairs: 1, switch_fraction: 1.0, seed: 0 }).is_err());
    }
}
