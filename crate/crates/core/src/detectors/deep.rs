//! Autoencoder and one-class (deep SVDD) window scorers.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{AgentWindows, CoordScaling, WindowOptions, WindowedFeatures, DAY_SECS};
use super::nn::{sample_losses, svdd_center, train_network, Objective, TinyNet, TrainHyper};
use super::Aggregate;
use crate::error::{Error, Result};
use crate::scores::ScoreTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// One model on the pooled train windows of every agent.
    Population,
    /// One model per agent on its own train windows.
    #[default]
    PerAgent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnParams {
    pub mode: TrainMode,
    pub window_secs: i64,
    pub seq_len: usize,
    pub coord_scaling: CoordScaling,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Hidden width is `input / hidden_divisor`.
    pub hidden_divisor: usize,
    pub svdd_dim: usize,
}

impl Default for NnParams {
    fn default() -> Self {
        NnParams {
            mode: TrainMode::PerAgent,
            window_secs: DAY_SECS,
            seq_len: 16,
            coord_scaling: CoordScaling::Standardized,
            lr: 0.01,
            epochs: 300,
            seed: 0,
            hidden_divisor: 4,
            svdd_dim: 16,
        }
    }
}

impl NnParams {
    pub fn windows(&self) -> WindowOptions {
        WindowOptions { window_secs: self.window_secs, seq_len: self.seq_len, coord_scaling: self.coord_scaling }
    }

    fn hyper(&self) -> TrainHyper {
        TrainHyper { lr: self.lr, epochs: self.epochs }
    }

    fn hidden(&self, d: usize) -> usize {
        (d / self.hidden_divisor.max(1)).max(1)
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Dae,
    Dsvdd,
}

fn stack(rows: &[&Vec<f64>], d: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j])
}

/// Trains on `train` and returns per-window scores for `test`.
/// Every model starts from the same seeded initialization, so identical inputs score identically.
fn fit_and_score(kind: Kind, train: &Array2<f64>, tests: &[Array2<f64>], p: &NnParams) -> Result<Vec<Vec<f64>>> {
    let (d, seed) = (train.ncols(), p.seed);
    let (net, obj, norm) = match kind {
        Kind::Dae => (TinyNet::new(&[d, p.hidden(d), d], true, seed)?, Objective::Reconstruction, d as f64),
        Kind::Dsvdd => {
            // no biases: a bias-only solution would map every input onto c
            let net = TinyNet::new(&[d, p.hidden(d), p.svdd_dim.max(1)], false, seed)?;
            let center = svdd_center(&net, train.view());
            (net, Objective::Svdd { center }, 1.0)
        }
    };
    let trained = train_network(net, train.view(), &obj, &p.hyper())?;
    tests
        .iter()
        .map(|x| Ok(sample_losses(&trained.net, x.view(), &obj)?.iter().map(|l| l / norm).collect()))
        .collect()
}

fn score(kind: Kind, name: &str, feat: &WindowedFeatures, p: &NnParams, aggregate: Aggregate) -> Result<ScoreTable> {
    let mut table = ScoreTable::new(name, "", "");
    for (id, why) in &feat.ineligible {
        table.omit(id, why);
    }
    let d = feat.dim;
    let scorable: Vec<&AgentWindows> = feat
        .agents
        .iter()
        .filter(|a| {
            if a.test.is_empty() {
                table.omit(&a.agent_id, "no test windows");
            }
            !a.test.is_empty() && !a.train.is_empty()
        })
        .collect();
    let test_mat = |a: &AgentWindows| stack(&a.test.iter().map(|w| &w.vector).collect::<Vec<_>>(), d);

    let per_agent: Vec<(String, Vec<f64>)> = match p.mode {
        TrainMode::Population => {
            let rows: Vec<&Vec<f64>> = feat.agents.iter().flat_map(|a| a.train.iter().map(|w| &w.vector)).collect();
            if rows.is_empty() {
                return Err(Error::InvalidInput("no train windows to fit on".into()));
            }
            let tests: Vec<Array2<f64>> = scorable.iter().map(|a| test_mat(a)).collect();
            let s = fit_and_score(kind, &stack(&rows, d), &tests, p)?;
            scorable.iter().map(|a| a.agent_id.clone()).zip(s).collect()
        }
        TrainMode::PerAgent => scorable
            .par_iter()
            .map(|a| {
                let train = stack(&a.train.iter().map(|w| &w.vector).collect::<Vec<_>>(), d);
                let mut s = fit_and_score(kind, &train, &[test_mat(a)], p)?;
                Ok((a.agent_id.clone(), s.pop().unwrap()))
            })
            .collect::<Result<_>>()?,
    };
    for (id, s) in per_agent {
        table.insert(id, aggregate.apply(&s));
    }
    Ok(table)
}

/// Mean squared reconstruction error of an autoencoder `[d, d/k, d]`.
pub fn dae_score(feat: &WindowedFeatures, p: &NnParams, aggregate: Aggregate) -> Result<ScoreTable> {
    score(Kind::Dae, "dae", feat, p, aggregate)
}

/// Squared distance to the one-class center of a bias-free encoder `[d, d/k, m]`.
pub fn dsvdd_score(feat: &WindowedFeatures, p: &NnParams, aggregate: Aggregate) -> Result<ScoreTable> {
    score(Kind::Dsvdd, "dsvdd", feat, p, aggregate)
}
