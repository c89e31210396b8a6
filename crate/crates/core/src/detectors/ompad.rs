use super::features::WindowedFeatures;
use super::Aggregate;
use crate::scores::ScoreTable;

/// Half the L1 distance between two histograms.
pub fn half_l1(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Place-type profile drift: each test window's type histogram against the
/// mean train-window histogram.
pub fn ompad_score(feat: &WindowedFeatures, aggregate: Aggregate) -> ScoreTable {
    let mut table = ScoreTable::new("ompad", "", "");
    for a in &feat.agents {
        if a.train.is_empty() {
            table.omit(&a.agent_id, "no train windows");
            continue;
        }
        if a.test.is_empty() {
            table.omit(&a.agent_id, "no test windows");
            continue;
        }
        let mut p = vec![0.0; feat.vocab.len()];
        for w in &a.train {
            for (acc, x) in p.iter_mut().zip(w.type_histogram(&feat.vocab)) {
                *acc += x / a.train.len() as f64;
            }
        }
        let d: Vec<f64> = a.test.iter().map(|w| half_l1(&p, &w.type_histogram(&feat.vocab))).collect();
        table.insert(&a.agent_id, aggregate.apply(&d).clamp(0.0, 1.0));
    }
    for (id, why) in &feat.ineligible {
        table.omit(id, why);
    }
    table
}
