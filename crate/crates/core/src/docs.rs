//! The exported documentation record.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assessment::{ExplanationAssessment, Overall};
use crate::step::{
    Anchor, CognitiveDecisionStep, InferredRationale, StepStatus, UserResponse,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExportError {
    #[error("step {0} is not ready for export")]
    IncompleteStep(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaBlock {
    pub question_id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Anchor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inferred_rationale: Option<InferredRationale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<UserResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocEntry {
    pub step_id: String,
    pub status: StepStatus,
    pub explanation: String,
    pub sentence_idxs: Vec<usize>,
    pub action_refs: Vec<usize>,
    pub decision_and_actions: Option<String>,
    pub rationale: Option<String>,
    pub progression: Option<String>,
    pub snapshot_refs: Vec<String>,
    pub assessment: Option<ExplanationAssessment>,
    pub final_overall: Option<Overall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qa: Option<QaBlock>,
}

impl DocEntry {
    pub fn from_step(step: &CognitiveDecisionStep) -> Self {
        let summary = step.summary.as_ref();
        let mut action_refs: Vec<usize> = step.action_refs().collect();
        action_refs.sort_unstable();
        DocEntry {
            step_id: step.step_id.clone(),
            status: step.status,
            explanation: String::from(step.text()),
            sentence_idxs: step.sentence_idxs().to_vec(),
            action_refs,
            decision_and_actions: summary.map(|s| s.decision_and_actions.clone()),
            rationale: summary.map(|s| s.rationale.clone()),
            progression: summary.map(|s| s.progression.clone()),
            snapshot_refs: step.snapshot_refs.clone(),
            assessment: step.reassessment.clone().or_else(|| step.assessment.clone()),
            final_overall: step.final_overall(),
            qa: step.exchange.as_ref().map(|e| QaBlock {
                question_id: e.question_id.clone(),
                question: e.question_text.clone(),
                anchor: e.anchor.clone(),
                inferred_rationale: e.inferred_rationale.clone(),
                response: e.response.clone(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Documentation {
    pub session_id: String,
    /// Set when the pipeline stopped early and some input is undocumented.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub incomplete: bool,
    pub steps: Vec<DocEntry>,
}

/// Strict export: every step must be past segmentation and every resolved
/// step must carry a summary.
pub fn export_documentation(
    session_id: &str,
    steps: &[CognitiveDecisionStep],
) -> Result<Documentation, ExportError> {
    for s in steps {
        if s.status == StepStatus::Segmented || (s.status.is_resolved() && s.summary.is_none()) {
            return Err(ExportError::IncompleteStep(s.step_id.clone()));
        }
    }
    Ok(export_partial(session_id, steps, false))
}

/// Lenient export that takes steps as they are.
pub fn export_partial(
    session_id: &str,
    steps: &[CognitiveDecisionStep],
    incomplete: bool,
) -> Documentation {
    Documentation {
        session_id: String::from(session_id),
        incomplete,
        steps: steps.iter().map(DocEntry::from_step).collect(),
    }
}
