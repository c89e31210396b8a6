use std::collections::BTreeMap;

use crate::model::{Dataset, LabelSet, Timestamp};

/// Where agents without a deviate point are split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fallback {
    /// First stay point arriving at or after the timestamp starts the test side.
    Timestamp(Timestamp),
    /// `floor(fraction * len)` points go to training.
    Fraction(f64),
}

impl Fallback {
    /// Picks the fallback recorded by the dataset producer: the simulator's
    /// `onset_timestamp`, the injector's `split_fraction`, else the median
    /// arrival time of labelled deviate points, else an 80% fraction.
    pub fn infer(ds: &Dataset, labels: &LabelSet) -> Fallback {
        if let Some(t) = ds.meta.get("onset_timestamp").and_then(|v| v.parse().ok()) {
            return Fallback::Timestamp(t);
        }
        if let Some(f) = ds.meta.get("split_fraction").and_then(|v| v.parse().ok()) {
            return Fallback::Fraction(f);
        }
        let mut times: Vec<Timestamp> = ds
            .trajectories
            .iter()
            .filter_map(|t| {
                let idx = labels.get(&t.agent_id)?.deviate_index?;
                t.points.get(idx).map(|p| p.arrive)
            })
            .collect();
        if times.is_empty() {
            return Fallback::Fraction(0.8);
        }
        times.sort_unstable();
        Fallback::Timestamp(times[times.len() / 2])
    }
}

/// Per-agent train/test boundary: points `[..boundary]` train, `[boundary..]` test.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitSpec {
    pub boundaries: BTreeMap<String, usize>,
}

impl SplitSpec {
    /// Labelled outliers split at their deviate index; everyone else by `fallback`.
    pub fn from_labels(ds: &Dataset, labels: &LabelSet, fallback: Fallback) -> Self {
        let boundaries = ds
            .trajectories
            .iter()
            .map(|t| {
                let n = t.points.len();
                let b = match labels.get(&t.agent_id).and_then(|l| l.deviate_index) {
                    Some(idx) => idx.min(n),
                    None => match fallback {
                        Fallback::Timestamp(ts) => t.points.partition_point(|p| p.arrive < ts),
                        Fallback::Fraction(f) => ((f * n as f64).floor() as usize).min(n),
                    },
                };
                (t.agent_id.clone(), b)
            })
            .collect();
        SplitSpec { boundaries }
    }

    pub fn infer(ds: &Dataset, labels: &LabelSet) -> Self {
        Self::from_labels(ds, labels, Fallback::infer(ds, labels))
    }

    pub fn boundary(&self, agent_id: &str) -> Option<usize> {
        self.boundaries.get(agent_id).copied()
    }
}
