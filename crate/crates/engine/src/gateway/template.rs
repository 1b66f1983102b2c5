//! Prompt template assets and rendering.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Template variables by placeholder name.
pub type Variables = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TemplateId {
    SentenceLink,
    SaLink,
    SentenceAssign,
    RationaleEval,
    QuestionGen,
    RationaleInfer,
    Summary,
    SummaryWithAnswer,
    /// Transcript-only segmentation used by the baseline ablation condition.
    BaselineSegment,
}

impl TemplateId {
    pub const ALL: [TemplateId; 9] = [
        TemplateId::SentenceLink,
        TemplateId::SaLink,
        TemplateId::SentenceAssign,
        TemplateId::RationaleEval,
        TemplateId::QuestionGen,
        TemplateId::RationaleInfer,
        TemplateId::Summary,
        TemplateId::SummaryWithAnswer,
        TemplateId::BaselineSegment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::SentenceLink => "SENTENCE_LINK",
            TemplateId::SaLink => "SA_LINK",
            TemplateId::SentenceAssign => "SENTENCE_ASSIGN",
            TemplateId::RationaleEval => "RATIONALE_EVAL",
            TemplateId::QuestionGen => "QUESTION_GEN",
            TemplateId::RationaleInfer => "RATIONALE_INFER",
            TemplateId::Summary => "SUMMARY",
            TemplateId::SummaryWithAnswer => "SUMMARY_WITH_ANSWER",
            TemplateId::BaselineSegment => "BASELINE_SEGMENT",
        }
    }

    pub fn body(self) -> &'static str {
        match self {
            TemplateId::SentenceLink => include_str!("../../templates/SENTENCE_LINK.txt"),
            TemplateId::SaLink => include_str!("../../templates/SA_LINK.txt"),
            TemplateId::SentenceAssign => include_str!("../../templates/SENTENCE_ASSIGN.txt"),
            TemplateId::RationaleEval => include_str!("../../templates/RATIONALE_EVAL.txt"),
            TemplateId::QuestionGen => include_str!("../../templates/QUESTION_GEN.txt"),
            TemplateId::RationaleInfer => include_str!("../../templates/RATIONALE_INFER.txt"),
            TemplateId::Summary => include_str!("../../templates/SUMMARY.txt"),
            TemplateId::SummaryWithAnswer => include_str!("../../templates/SUMMARY_WITH_ANSWER.txt"),
            TemplateId::BaselineSegment => include_str!("../../templates/BASELINE_SEGMENT.txt"),
        }
    }

    /// Placeholder names, in order of first appearance.
    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateId::SentenceLink => &[FEW_SHOTS, "transcript in sentence level"],
            TemplateId::SaLink => &["segmented_transcripts", "sets_of_design_action_and_screenshot"],
            TemplateId::SentenceAssign => &[
                "transcript",
                "unassigned_grouped_sentence",
                "left_grouped_sentence",
                "right_grouped_sentence",
            ],
            TemplateId::RationaleEval => &[FEW_SHOTS, "decision_step"],
            TemplateId::QuestionGen => {
                &["explanation", "decision_step", "reason_for_insufficient_rationale"]
            }
            TemplateId::RationaleInfer => &[
                "explanation",
                "decision_step",
                "reason_for_insufficient_rationale",
                "previous_decision_step_summaries",
            ],
            TemplateId::Summary => &["transcript", "decision_step", "related_screenshots"],
            TemplateId::SummaryWithAnswer => &[
                "transcript",
                "decision_step",
                "related_screenshots",
                "clarification_question",
                "answer",
            ],
            TemplateId::BaselineSegment => &["transcript"],
        }
    }

    /// Whether snapshot images accompany the prompt.
    pub fn expects_images(self) -> bool {
        matches!(self, TemplateId::SaLink | TemplateId::Summary | TemplateId::SummaryWithAnswer)
    }
}

/// The few-shot slot, written with doubled braces in the assets.
pub const FEW_SHOTS: &str = "Few shots";

fn token(name: &str) -> String {
    if name == FEW_SHOTS {
        format!("{{{{{name}}}}}")
    } else {
        format!("{{{name}}}")
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown template `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("placeholder `{0}` has no value")]
    UnboundPlaceholder(String),
    #[error("variable `{0}` is not a placeholder of this template")]
    UnknownVariable(String),
}

/// Substitute every placeholder in one left-to-right pass. Substituted
/// values are never rescanned, so braces inside them are inert.
pub fn render_prompt(template: TemplateId, vars: &Variables) -> Result<String, RenderError> {
    let names = template.placeholders();
    if let Some(unknown) = vars.keys().find(|k| !names.contains(&k.as_str())) {
        return Err(RenderError::UnknownVariable(unknown.clone()));
    }
    let mut tokens: Vec<(String, &str)> = Vec::with_capacity(names.len());
    for name in names {
        let value = vars
            .get(*name)
            .ok_or_else(|| RenderError::UnboundPlaceholder((*name).to_string()))?;
        tokens.push((token(name), value.as_str()));
    }
    // Longest first so `{{x}}` wins over a nested `{x}`.
    tokens.sort_by_key(|(t, _)| std::cmp::Reverse(t.len()));

    let body = template.body();
    let mut out = String::with_capacity(body.len() + vars.values().map(String::len).sum::<usize>());
    let mut rest = body;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        match tokens.iter().find(|(t, _)| tail.starts_with(t.as_str())) {
            Some((t, v)) => {
                out.push_str(v);
                rest = &tail[t.len()..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}
