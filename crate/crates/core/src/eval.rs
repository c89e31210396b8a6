//! Ranking metrics over score tables: Top-K hits, average precision and ROC AUC,
//! plus the tabular report.
//!
//! Ordering is deterministic everywhere: score descending, ties broken by
//! ascending agent id. AUC counts ties as half a win. Only agents that are
//! both labelled and scored enter AP/AUC; labelled agents a detector omitted
//! are reported and count as never retrieved for Top-K.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::LabelSet;
use crate::scores::ScoreTable;

/// `(agent_id, score, is_outlier)` for every labelled, scored agent, in rank order.
pub fn ranked<'a>(scores: &'a ScoreTable, labels: &LabelSet) -> Vec<(&'a str, f64, bool)> {
    let mut rows: Vec<(&str, f64, bool)> = scores
        .scores
        .iter()
        .filter_map(|(id, &s)| labels.get(id).map(|l| (id.as_str(), s, l.is_outlier)))
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    rows
}

pub fn top_k_hits(scores: &ScoreTable, labels: &LabelSet, k: usize) -> usize {
    ranked(scores, labels).iter().take(k).filter(|r| r.2).count()
}

pub fn average_precision(scores: &ScoreTable, labels: &LabelSet) -> Result<f64> {
    average_precision_ranked(&ranked(scores, labels))
}

fn average_precision_ranked(rows: &[(&str, f64, bool)]) -> Result<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, row) in rows.iter().enumerate() {
        if row.2 {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(Error::UndefinedMetric("average precision needs at least one positive".into()));
    }
    Ok(sum / hits as f64)
}

pub fn roc_auc(scores: &ScoreTable, labels: &LabelSet) -> Result<f64> {
    roc_auc_ranked(&ranked(scores, labels))
}

/// Mann–Whitney U via midranks over tied groups.
fn roc_auc_ranked(rows: &[(&str, f64, bool)]) -> Result<f64> {
    let n_pos = rows.iter().filter(|r| r.2).count();
    let n_neg = rows.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("ROC AUC needs both positives and negatives".into()));
    }
    // walk from the lowest score up, crediting each positive with the negatives below it
    let mut wins = 0.0;
    let mut neg_below = 0usize;
    let mut i = rows.len();
    while i > 0 {
        let score = rows[i - 1].1;
        let mut j = i;
        while j > 0 && rows[j - 1].1 == score {
            j -= 1;
        }
        let group = &rows[j..i];
        let pos = group.iter().filter(|r| r.2).count();
        let neg = group.len() - pos;
        wins += pos as f64 * (neg_below as f64 + 0.5 * neg as f64);
        neg_below += neg;
        i = j;
    }
    Ok(wins / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub top_k_hits: BTreeMap<usize, usize>,
    pub ap: Option<f64>,
    pub auc: Option<f64>,
    pub n_agents: usize,
    pub n_outliers: usize,
    pub omitted_agents: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub dataset_id: String,
    pub ks: Vec<usize>,
    pub rows: Vec<ReportRow>,
}

pub fn make_report(tables: &[ScoreTable], labels: &LabelSet, ks: &[usize]) -> Result<EvalReport> {
    if tables.is_empty() {
        return Err(Error::Config("no score tables to report".into()));
    }
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config("Top-K values must be >= 1".into()));
    }
    let dataset_id = tables[0].dataset_id.clone();
    if let Some(t) = tables.iter().find(|t| t.dataset_id != dataset_id) {
        return Err(Error::Config(format!(
            "score tables come from different datasets ({} vs {})",
            dataset_id, t.dataset_id
        )));
    }
    let rows = tables
        .iter()
        .map(|t| {
            let rows = ranked(t, labels);
            ReportRow {
                method: t.method.clone(),
                top_k_hits: ks.iter().map(|&k| (k, rows.iter().take(k).filter(|r| r.2).count())).collect(),
                ap: average_precision_ranked(&rows).ok(),
                auc: roc_auc_ranked(&rows).ok(),
                n_agents: rows.len(),
                n_outliers: rows.iter().filter(|r| r.2).count(),
                omitted_agents: labels.entries.keys().filter(|id| !t.scores.contains_key(*id)).count(),
            }
        })
        .collect();
    Ok(EvalReport { dataset_id, ks: ks.to_vec(), rows })
}

fn metric(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".to_string())
}

impl EvalReport {
    fn header(&self) -> Vec<String> {
        let mut h = vec!["Model".to_string()];
        h.extend(self.ks.iter().map(|k| format!("Top-{k} Hits")));
        h.extend(["AP score", "AUC score", "Agents", "Outliers", "Omitted"].map(String::from));
        h
    }

    fn cells(&self, row: &ReportRow) -> Vec<String> {
        let mut c = vec![row.method.clone()];
        c.extend(self.ks.iter().map(|k| row.top_k_hits[k].to_string()));
        c.push(metric(row.ap));
        c.push(metric(row.auc));
        c.push(row.n_agents.to_string());
        c.push(row.n_outliers.to_string());
        c.push(row.omitted_agents.to_string());
        c
    }

    /// Aligned plain-text table; model names left-aligned, numbers right-aligned.
    pub fn render_text(&self) -> String {
        let header = self.header();
        let body: Vec<Vec<String>> = self.rows.iter().map(|r| self.cells(r)).collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| body.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
            .collect();
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (c, (cell, w)) in cells.iter().zip(&widths).enumerate() {
                if c == 0 {
                    let _ = write!(s, "{cell:<w$}");
                } else {
                    let _ = write!(s, "  {cell:>w$}");
                }
            }
            s.push('\n');
            s
        };
        let mut out = line(&header);
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        out.push('\n');
        for r in &body {
            out.push_str(&line(r));
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("model");
        for k in &self.ks {
            let _ = write!(out, ",top_{k}_hits");
        }
        out.push_str(",ap,auc,n_agents,n_outliers,omitted_agents\n");
        for r in &self.rows {
            out.push_str(&self.cells(r).join(","));
            out.push('\n');
        }
        out
    }
}
