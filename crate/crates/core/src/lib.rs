//! Benchmark toolkit for anomaly detection in semantic human-mobility trajectories.
//!
//! Pipeline: [`simulator`] / [`ingest`] produce canonical datasets, [`inject`]
//! plants labelled imposter outliers, [`detectors`] and [`llm`] score agents,
//! and [`eval`] turns score tables into ranking metrics.

pub mod error;
pub mod io;
pub mod ingest;
pub mod model;

pub use error::{Error, Result};
pub mod rng;
pub mod simulator;
pub mod inject;
pub mod scores;
pub mod eval;
pub mod detectors;
pub mod llm;
pub mod cli;
