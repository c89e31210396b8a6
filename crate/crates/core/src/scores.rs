//! Per-agent anomaly scores produced by any detector.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_to_string, write_file};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    pub method: String,
    pub params_hash: String,
    /// Content id of the dataset that was scored (see [`crate::io::dataset_id`]).
    pub dataset_id: String,
    /// Higher means more anomalous.
    pub scores: BTreeMap<String, f64>,
    /// Agents the detector declined to score, with the reason.
    pub omitted: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct ScoreRecord {
    agent_id: String,
    score: f64,
    method: String,
    params_hash: String,
    #[serde(default)]
    dataset_id: String,
}

impl ScoreTable {
    pub fn new(method: impl Into<String>, params_hash: impl Into<String>, dataset_id: impl Into<String>) -> Self {
        ScoreTable {
            method: method.into(),
            params_hash: params_hash.into(),
            dataset_id: dataset_id.into(),
            ..Default::default()
        }
    }

    pub fn insert(&mut self, agent_id: impl Into<String>, score: f64) {
        self.scores.insert(agent_id.into(), score);
    }

    pub fn omit(&mut self, agent_id: impl Into<String>, reason: impl Into<String>) {
        self.omitted.insert(agent_id.into(), reason.into());
    }

    pub fn get(&self, agent_id: &str) -> Option<f64> {
        self.scores.get(agent_id).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// `scores.jsonl`: one `{agent_id, score, method, params_hash, dataset_id}` line per scored agent.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (id, &score) in &self.scores {
            let rec = ScoreRecord {
                agent_id: id.clone(),
                score,
                method: self.method.clone(),
                params_hash: self.params_hash.clone(),
                dataset_id: self.dataset_id.clone(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("score record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut table = ScoreTable::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ScoreRecord =
                serde_json::from_str(line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            if !rec.score.is_finite() {
                return Err(Error::Parse { line: i + 1, message: "non-finite score".into() });
            }
            if table.scores.is_empty() {
                table.method = rec.method;
                table.params_hash = rec.params_hash;
                table.dataset_id = rec.dataset_id;
            } else if rec.method != table.method {
                return Err(Error::Parse { line: i + 1, message: "mixed methods in one score file".into() });
            }
            table.scores.insert(rec.agent_id, rec.score);
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_jsonl().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_jsonl(&read_to_string(path)?)
    }
}
