//! Classical and neural trajectory outlier detectors over a shared
//! train/test split.

pub mod deep;
pub mod features;
pub mod monav;
pub mod nn;
pub mod ompad;
pub mod split;
pub mod traod;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use deep::{dae_score, dsvdd_score, NnParams, TrainMode};
pub use features::{build_windows, CoordScaling, Vocabulary, Window, WindowOptions, WindowedFeatures};
pub use monav::{monav_tt_score, MonavParams};
pub use nn::{train_network, Objective, TinyNet, TrainHyper};
pub use ompad::ompad_score;
pub use split::{Fallback, SplitSpec};
pub use traod::{traod_score, traod_segment_distance, Segment, TraodParams};

use crate::error::{Error, Result};
use crate::model::{Dataset, LabelSet};
use crate::scores::ScoreTable;

/// How per-window scores collapse into one agent score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    #[default]
    Mean,
    Max,
}

impl Aggregate {
    pub fn apply(self, xs: &[f64]) -> f64 {
        match self {
            Aggregate::Mean => xs.iter().sum::<f64>() / xs.len().max(1) as f64,
            Aggregate::Max => xs.iter().copied().fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Ompad,
    Monav,
    Traod,
    Dae,
    Dsvdd,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Ompad, Method::Monav, Method::Traod, Method::Dae, Method::Dsvdd];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ompad => "ompad",
            Method::Monav => "monav",
            Method::Traod => "traod",
            Method::Dae => "dae",
            Method::Dsvdd => "dsvdd",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}' (expected ompad|monav|traod|dae|dsvdd)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OmpadParams {
    pub window_secs: i64,
}

impl Default for OmpadParams {
    fn default() -> Self {
        OmpadParams { window_secs: features::WEEK_SECS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorParams {
    pub aggregate: Aggregate,
    pub ompad: OmpadParams,
    pub monav: MonavParams,
    pub traod: TraodParams,
    pub nn: NnParams,
}

impl DetectorParams {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("params serialize");
        crate::io::sha256_hex(text.as_bytes())[..16].to_string()
    }
}

/// Splits `ds` using `labels` and dataset metadata, then runs `method`.
pub fn run_detector(method: Method, ds: &Dataset, labels: &LabelSet, params: &DetectorParams) -> Result<ScoreTable> {
    let split = SplitSpec::infer(ds, labels);
    let mut table = match method {
        Method::Ompad => {
            let opts = WindowOptions { window_secs: params.ompad.window_secs, ..Default::default() };
            ompad_score(&build_windows(ds, &split, &opts)?, params.aggregate)
        }
        Method::Monav => monav_tt_score(ds, &split, &params.monav, params.aggregate),
        Method::Traod => traod_score(ds, &split, &params.traod)?.table,
        Method::Dae => dae_score(&build_windows(ds, &split, &params.nn.windows())?, &params.nn, params.aggregate)?,
        Method::Dsvdd => dsvdd_score(&build_windows(ds, &split, &params.nn.windows())?, &params.nn, params.aggregate)?,
    };
    table.method = method.as_str().to_string();
    table.params_hash = params.hash();
    table.dataset_id = crate::io::dataset_id(ds);
    Ok(table)
}
