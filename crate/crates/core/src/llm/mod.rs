//! Prompt-based anomaly scoring with hosted chat models.

pub mod client;
pub mod parse;
pub mod prompt;
pub mod render;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use thiserror::Error;

pub use client::{ChatTransport, LlmClient, LlmEndpointConfig, MockTransport, Provider, TableTransport};
pub use parse::{parse_combine_scores, parse_separate_score};
pub use prompt::{build_combine_batches, build_prompt, PromptBundle, PromptMode, TemplateVersion};
pub use render::{render_stay_sequence, DEVIATE_MARKER};

use crate::detectors::SplitSpec;
use crate::error::Result;
use crate::model::{Dataset, LabelSet, Trajectory};
use crate::scores::ScoreTable;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("no bracketed score in answer: {raw:?}")]
    NoScore { raw: String },

    #[error("combine answer resolved {} agents, unresolved {unresolved:?}", resolved.len())]
    PartialParse { resolved: BTreeMap<String, f64>, unresolved: Vec<String>, raw: String },

    #[error("endpoint rejected credentials (HTTP {status})")]
    Auth { status: u16 },

    #[error("environment variable {0} with the API token is not set")]
    MissingToken(String),

    #[error("transport: {0}")]
    Transport(String),

    #[error("cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlmAnswer {
    pub agent_ids: Vec<String>,
    pub raw_text: String,
    pub parsed_scores: BTreeMap<String, f64>,
    pub input_tokens: u64,
    pub output_tokens: u64,
    // run telemetry, kept out of artifacts so reruns are byte-identical
    #[serde(skip)]
    pub latency_ms: u64,
    #[serde(skip)]
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmRun {
    pub table: ScoreTable,
    pub answers: Vec<LlmAnswer>,
}

/// Hint position per agent: its split boundary, when that leaves a point to mark.
fn hint_positions(ds: &Dataset, labels: &LabelSet) -> BTreeMap<String, Option<usize>> {
    let split = SplitSpec::infer(ds, labels);
    ds.trajectories
        .iter()
        .map(|t| {
            let b = split.boundary(&t.agent_id).filter(|&b| b < t.points.len());
            (t.agent_id.clone(), b)
        })
        .collect()
}

/// All prompts for `ds` in agent-id order, plus agents that could not be rendered.
pub fn prompt_bundles(
    ds: &Dataset,
    labels: &LabelSet,
    mode: PromptMode,
    version: TemplateVersion,
    char_budget: usize,
) -> Result<(Vec<PromptBundle>, BTreeMap<String, String>)> {
    let hints = hint_positions(ds, labels);
    let mut trajs: Vec<&Trajectory> = ds.trajectories.iter().collect();
    trajs.sort_by(|a, b| a.agent_id.cmp(&b.agent_id));
    let mut skipped = BTreeMap::new();
    let mut items = Vec::new();
    for t in trajs {
        let hint = hints[&t.agent_id];
        if t.points.is_empty() {
            skipped.insert(t.agent_id.clone(), "no stay points".to_string());
        } else if mode.has_hint() && hint.is_none() {
            skipped.insert(t.agent_id.clone(), "no deviate point to mark".to_string());
        } else {
            items.push((t, hint));
        }
    }
    let bundles = if mode.is_combine() {
        build_combine_batches(mode, &items, version, char_budget)?
    } else {
        items.iter().map(|it| build_prompt(mode, std::slice::from_ref(it), version)).collect::<Result<_>>()?
    };
    Ok((bundles, skipped))
}

/// The canned answer an oracle gives to `bundle`.
pub fn oracle_answer(bundle: &PromptBundle, labels: &LabelSet) -> String {
    let score = |id: &str| if labels.is_outlier(id) { "[0.9]" } else { "[0.1]" };
    if bundle.mode.is_combine() {
        let lines: Vec<String> =
            bundle.agent_ids.iter().enumerate().map(|(i, id)| format!("user {}: {}", i + 1, score(id))).collect();
        lines.join("\n")
    } else {
        format!("Estimated anomaly score: {}", score(&bundle.agent_ids[0]))
    }
}

/// Client whose transport answers every prompt of this run from the labels.
pub fn oracle_client(config: LlmEndpointConfig, ds: &Dataset, labels: &LabelSet, mode: PromptMode, version: TemplateVersion) -> Result<LlmClient> {
    let (bundles, _) = prompt_bundles(ds, labels, mode, version, config.combine_char_budget)?;
    let answers: HashMap<String, String> = bundles.iter().map(|b| (b.text.clone(), oracle_answer(b, labels))).collect();
    Ok(LlmClient::new(config, Box::new(TableTransport { answers, fallback: None })))
}

/// Builds prompts, sends them with bounded concurrency and parses the answers.
/// Unparseable answers and failed requests omit their agents; an auth failure
/// aborts the run.
pub fn run_llm_detection(ds: &Dataset, labels: &LabelSet, mode: PromptMode, version: TemplateVersion, client: &LlmClient) -> Result<LlmRun> {
    let (bundles, skipped) = prompt_bundles(ds, labels, mode, version, client.config.combine_char_budget)?;
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<std::result::Result<client::Completion, LlmError>>>> =
        Mutex::new((0..bundles.len()).map(|_| None).collect());
    let workers = client.config.max_concurrent_requests.max(1).min(bundles.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(b) = bundles.get(i) else { break };
                let r = client.complete(&b.text, version.as_str());
                if matches!(r, Err(LlmError::Auth { .. } | LlmError::MissingToken(_))) {
                    abort.store(true, Ordering::SeqCst);
                }
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
            });
        }
    });

    let mut table = ScoreTable::new(format!("llm-{mode}"), version.as_str(), crate::io::dataset_id(ds));
    for (id, why) in skipped {
        table.omit(id, why);
    }
    let mut answers = Vec::new();
    for (b, slot) in bundles.iter().zip(slots.into_inner().unwrap_or_else(|e| e.into_inner())) {
        let done = match slot {
            Some(Err(e @ (LlmError::Auth { .. } | LlmError::MissingToken(_)))) => return Err(e.into()),
            Some(Err(e)) => Err(e.to_string()),
            Some(Ok(c)) => Ok(c),
            None => Err("not sent".to_string()),
        };
        let c = match done {
            Ok(c) => c,
            Err(why) => {
                for id in &b.agent_ids {
                    table.omit(id, format!("request failed: {why}"));
                }
                continue;
            }
        };
        let parsed: BTreeMap<String, f64> = if mode.is_combine() {
            match parse_combine_scores(&c.response.text, &b.agent_ids) {
                Ok(m) => m,
                Err(LlmError::PartialParse { resolved, unresolved, .. }) => {
                    for id in unresolved {
                        table.omit(id, "no score for this user in the answer");
                    }
                    resolved
                }
                Err(e) => return Err(e.into()),
            }
        } else {
            match parse_separate_score(&c.response.text) {
                Ok(v) => BTreeMap::from([(b.agent_ids[0].clone(), v)]),
                Err(_) => {
                    table.omit(&b.agent_ids[0], "no bracketed score in the answer");
                    BTreeMap::new()
                }
            }
        };
        for (id, v) in &parsed {
            table.insert(id, *v);
        }
        answers.push(LlmAnswer {
            agent_ids: b.agent_ids.clone(),
            raw_text: c.response.text,
            parsed_scores: parsed,
            input_tokens: c.response.input_tokens,
            output_tokens: c.response.output_tokens,
            latency_ms: c.latency_ms,
            cached: c.cached,
        });
    }
    Ok(LlmRun { table, answers })
}

/// Writes every prompt to `<dir>/<nnnn>.txt` and an `index.jsonl` listing
/// the agents in each; returns the number of prompts.
pub fn dump_prompts(
    ds: &Dataset,
    labels: &LabelSet,
    mode: PromptMode,
    version: TemplateVersion,
    char_budget: usize,
    dir: &Path,
) -> Result<usize> {
    let (bundles, skipped) = prompt_bundles(ds, labels, mode, version, char_budget)?;
    let mut index = String::new();
    for (i, b) in bundles.iter().enumerate() {
        let name = format!("{i:04}.txt");
        crate::io::write_file(&dir.join(&name), b.text.as_bytes())?;
        let rec = serde_json::json!({
            "file": name,
            "agent_ids": b.agent_ids,
            "mode": b.mode,
            "template_version": b.template_version,
        });
        index.push_str(&rec.to_string());
        index.push('\n');
    }
    for (id, why) in skipped {
        index.push_str(&serde_json::json!({ "skipped": id, "reason": why }).to_string());
        index.push('\n');
    }
    crate::io::write_file(&dir.join("index.jsonl"), index.as_bytes())?;
    Ok(bundles.len())
}
