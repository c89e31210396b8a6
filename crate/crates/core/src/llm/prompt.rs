use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::render::render_stay_sequence;
use crate::error::{Error, Result};
use crate::model::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptMode {
    Separate,
    SeparateHint,
    Combine,
    CombineHint,
}

impl PromptMode {
    pub const ALL: [PromptMode; 4] =
        [PromptMode::Separate, PromptMode::SeparateHint, PromptMode::Combine, PromptMode::CombineHint];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::Separate => "separate",
            PromptMode::SeparateHint => "separate-hint",
            PromptMode::Combine => "combine",
            PromptMode::CombineHint => "combine-hint",
        }
    }

    pub fn has_hint(self) -> bool {
        matches!(self, PromptMode::SeparateHint | PromptMode::CombineHint)
    }

    pub fn is_combine(self) -> bool {
        matches!(self, PromptMode::Combine | PromptMode::CombineHint)
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PromptMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown prompt mode '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum TemplateVersion {
    /// Wording kept exactly as originally published, typos included.
    #[default]
    #[serde(rename = "paper-v1")]
    PaperV1,
    /// Same structure with spelling fixed and an explicit combine answer format.
    #[serde(rename = "clean-v1")]
    CleanV1,
}

impl TemplateVersion {
    pub fn as_str(self) -> &'static str {
        match self {
            TemplateVersion::PaperV1 => "paper-v1",
            TemplateVersion::CleanV1 => "clean-v1",
        }
    }
}

impl FromStr for TemplateVersion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-v1" => Ok(TemplateVersion::PaperV1),
            "clean-v1" => Ok(TemplateVersion::CleanV1),
            _ => Err(Error::Config(format!("unknown template version '{s}'"))),
        }
    }
}

struct Template {
    task_separate: &'static str,
    task_combine: &'static str,
    hint: &'static str,
    description: &'static str,
    sequence_separate: &'static str,
    close_separate: &'static str,
    close_combine: &'static str,
}

const TASK_HEAD: &str = "Task: You are a human mobility trajectory behavior anomaly detector.";

const PAPER_V1: Template = Template {
    task_separate: "Given a historical human trajectory information, can you analyse the pattern behind the trajectory and give an anomaly score (from 0 to 1, where larger value indicates more abnormal) of this user's behavior?",
    task_combine: "Given a set of {N} users' historical human trajectories information, can you analyse the pattern behind each user's trajectory and give an anomaly score (from 0 to 1, where larger value indicates more abnormal) of users' behavior?",
    hint: "Hint: The anomaly users would suddenly change their mobility pattern starting from a time point, which means after a certain time, their mobility behavior would significantly deviate from their past behaviors. We would use \"***<deviate-point>***\" inside each trajectory to denote the time point as hint.",
    description: "Description of input trajectory data: A temporal sequence of visited place points, each place is consisted of the visited timestamp and its type of location. Then the traveled distance to next location is given.",
    sequence_separate: "Here is the sequence of trajector: ",
    close_separate: "Give your analysis and present your esimated anomaly score (from 0 to 1, where larger value indicates more abnormal) inside a pair of square brackets [] :",
    close_combine: "Give your analysis and present your esimated anomaly scores about all users (from 0 to 1, where larger value indicates more abnormal):",
};

const CLEAN_V1: Template = Template {
    task_separate: PAPER_V1.task_separate,
    task_combine: PAPER_V1.task_combine,
    hint: PAPER_V1.hint,
    description: "Description of input trajectory data: A temporal sequence of visited place points, each place consists of the visited timestamp and its type of location. Then the traveled distance to next location is given.",
    sequence_separate: "Here is the sequence of trajectory: ",
    close_separate: "Give your analysis and present your estimated anomaly score (from 0 to 1, where larger value indicates more abnormal) inside a pair of square brackets [] :",
    close_combine: "Give your analysis and present your estimated anomaly scores about all users (from 0 to 1, where larger value indicates more abnormal), one line per user in the form \"user <i>: [score]\":",
};

fn template(v: TemplateVersion) -> &'static Template {
    match v {
        TemplateVersion::PaperV1 => &PAPER_V1,
        TemplateVersion::CleanV1 => &CLEAN_V1,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub text: String,
    pub agent_ids: Vec<String>,
    pub mode: PromptMode,
    pub template_version: TemplateVersion,
}

fn render_all(mode: PromptMode, items: &[(&Trajectory, Option<usize>)]) -> Result<Vec<String>> {
    items
        .iter()
        .map(|(t, hint)| {
            let marker = if mode.has_hint() {
                Some(hint.ok_or_else(|| Error::Config(format!("{mode} needs a deviate index for agent {}", t.agent_id)))?)
            } else {
                None
            };
            render_stay_sequence(t, marker)
        })
        .collect()
}

fn user_block(i: usize, seq: &str) -> String {
    format!("Here is the sequence of user {i}: {seq}")
}

/// Prompt text around pre-rendered sequences.
fn assemble(mode: PromptMode, tpl: &Template, seqs: &[String]) -> String {
    let mut parts: Vec<String> = Vec::new();
    if mode.is_combine() {
        parts.push(format!("{TASK_HEAD} {}", tpl.task_combine.replace("{N}", &seqs.len().to_string())));
    } else {
        parts.push(format!("{TASK_HEAD} {}", tpl.task_separate));
    }
    if mode.has_hint() {
        parts.push(tpl.hint.to_string());
    }
    parts.push(tpl.description.to_string());
    if mode.is_combine() {
        parts.extend(seqs.iter().enumerate().map(|(i, s)| user_block(i + 1, s)));
        parts.push(tpl.close_combine.to_string());
    } else {
        parts.push(format!("{}{}.", tpl.sequence_separate, seqs[0]));
        parts.push(tpl.close_separate.to_string());
    }
    parts.join("\n")
}

/// Assembles one prompt. `items` pairs each trajectory with its hint position;
/// hint modes need a position for every trajectory.
pub fn build_prompt(mode: PromptMode, items: &[(&Trajectory, Option<usize>)], version: TemplateVersion) -> Result<PromptBundle> {
    if items.is_empty() {
        return Err(Error::Config("a prompt needs at least one trajectory".into()));
    }
    if !mode.is_combine() && items.len() != 1 {
        return Err(Error::Config(format!("{mode} prompts take exactly one trajectory, got {}", items.len())));
    }
    let seqs = render_all(mode, items)?;
    Ok(PromptBundle {
        text: assemble(mode, template(version), &seqs),
        agent_ids: items.iter().map(|(t, _)| t.agent_id.clone()).collect(),
        mode,
        template_version: version,
    })
}

/// Splits `items` into contiguous combine prompts of at most `char_budget`
/// characters each; an agent that alone exceeds the budget gets its own prompt.
pub fn build_combine_batches(
    mode: PromptMode,
    items: &[(&Trajectory, Option<usize>)],
    version: TemplateVersion,
    char_budget: usize,
) -> Result<Vec<PromptBundle>> {
    if !mode.is_combine() {
        return Err(Error::Config(format!("{mode} is not a combine mode")));
    }
    let tpl = template(version);
    let seqs = render_all(mode, items)?;
    let chars = |s: &str| s.chars().count();
    // prompt length = frame with empty sequences + the sequences themselves
    let len_of = |k: usize, seq_chars: usize| chars(&assemble(mode, tpl, &vec![String::new(); k])) + seq_chars;
    let mut out = Vec::new();
    let mut start = 0;
    while start < seqs.len() {
        let mut end = start + 1;
        let mut seq_chars = chars(&seqs[start]);
        while end < seqs.len() {
            let next = seq_chars + chars(&seqs[end]);
            if len_of(end - start + 1, next) > char_budget {
                break;
            }
            seq_chars = next;
            end += 1;
        }
        let ids = items[start..end].iter().map(|(t, _)| t.agent_id.clone()).collect();
        out.push(PromptBundle { text: assemble(mode, tpl, &seqs[start..end]), agent_ids: ids, mode, template_version: version });
        start = end;
    }
    Ok(out)
}
