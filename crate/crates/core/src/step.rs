//! Decision steps and the clarification exchange attached to them.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assessment::{ExplanationAssessment, Overall};
use crate::event::BBox;

/// Consecutive transcript sentences about one element or sub-task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceGroup {
    pub group_id: usize,
    pub sentence_idxs: Vec<usize>,
    pub combined_text: String,
}

impl SentenceGroup {
    pub fn first_idx(&self) -> Option<usize> {
        self.sentence_idxs.first().copied()
    }

    /// True when the ordinals form a gap-free increasing run.
    pub fn is_consecutive(&self) -> bool {
        self.sentence_idxs.windows(2).all(|w| w[1] == w[0] + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingBasis {
    SingleElementRun,
    MultiElementSameAction,
}

/// Linked tool actions. `action_refs` are session-wide action ordinals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionGroup {
    pub group_id: usize,
    pub action_refs: Vec<usize>,
    pub grouping_basis: GroupingBasis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Segmented,
    Assessed,
    QuestionPending,
    ResolvedStrong,
    ResolvedWeak,
    Unassessed,
}

impl StepStatus {
    pub fn is_resolved(self) -> bool {
        matches!(self, StepStatus::ResolvedStrong | StepStatus::ResolvedWeak)
    }
}

/// Where a question is pinned on the canvas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub element_id: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferredRationale {
    pub text: String,
    pub reasoning: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseMode {
    /// Free-text answer with no inference shown.
    Answered,
    /// The inferred rationale was confirmed as correct.
    Accepted,
    /// Free-text answer given alongside a visible inference.
    Supplemented,
    /// The inferred rationale was declined; the question stays open.
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserResponse {
    pub mode: ResponseMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_text: Option<String>,
    pub at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResponseError {
    #[error("an accepted response needs an inferred rationale to accept")]
    NothingToAccept,
    #[error("mode `{0:?}` requires non-empty answer text")]
    MissingAnswer(ResponseMode),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClarificationExchange {
    pub question_id: String,
    pub question_text: String,
    pub anchor: Option<Anchor>,
    pub inferred_rationale: Option<InferredRationale>,
    /// Summary ids the inference was drawn from.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub basis_summary_ids: Vec<String>,
    pub response: Option<UserResponse>,
}

impl ClarificationExchange {
    /// Open means no response yet, or only a rejection of the inference.
    pub fn is_open(&self) -> bool {
        match &self.response {
            None => true,
            Some(r) => r.mode == ResponseMode::Rejected,
        }
    }

    pub fn check_response(&self, response: &UserResponse) -> Result<(), ResponseError> {
        match response.mode {
            ResponseMode::Accepted if self.inferred_rationale.is_none() => {
                Err(ResponseError::NothingToAccept)
            }
            ResponseMode::Answered | ResponseMode::Supplemented
                if response.answer_text.as_deref().is_none_or(|t| t.trim().is_empty()) =>
            {
                Err(ResponseError::MissingAnswer(response.mode))
            }
            _ => Ok(()),
        }
    }
}

/// One-line (decision, rationale, progression) record of a step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionStepSummary {
    pub step_id: String,
    pub decision_and_actions: String,
    pub rationale: String,
    pub progression: String,
    pub snapshot_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CognitiveDecisionStep {
    pub step_id: String,
    pub sentence_group: Option<SentenceGroup>,
    pub action_groups: Vec<ActionGroup>,
    pub snapshot_refs: Vec<String>,
    pub assessment: Option<ExplanationAssessment>,
    /// Assessment of the explanation plus the user's answer, if re-evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reassessment: Option<ExplanationAssessment>,
    pub exchange: Option<ClarificationExchange>,
    pub summary: Option<DecisionStepSummary>,
    pub status: StepStatus,
    /// Audit notes from assembly (merged groups, fallbacks taken).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CognitiveDecisionStep {
    pub fn new(step_id: impl Into<String>) -> Self {
        CognitiveDecisionStep {
            step_id: step_id.into(),
            sentence_group: None,
            action_groups: Vec::new(),
            snapshot_refs: Vec::new(),
            assessment: None,
            reassessment: None,
            exchange: None,
            summary: None,
            status: StepStatus::Segmented,
            notes: Vec::new(),
        }
    }

    /// The explanation text, empty for action-only steps.
    pub fn text(&self) -> &str {
        self.sentence_group.as_ref().map_or("", |g| g.combined_text.as_str())
    }

    pub fn sentence_idxs(&self) -> &[usize] {
        self.sentence_group.as_ref().map_or(&[], |g| g.sentence_idxs.as_slice())
    }

    pub fn action_refs(&self) -> impl Iterator<Item = usize> + '_ {
        self.action_groups.iter().flat_map(|g| g.action_refs.iter().copied())
    }

    pub fn has_explanation(&self) -> bool {
        !self.text().trim().is_empty()
    }

    /// Grade after any clarification: an accepted inference counts as strong,
    /// otherwise the re-evaluation wins over the first assessment.
    pub fn final_overall(&self) -> Option<Overall> {
        if let Some(r) = self.exchange.as_ref().and_then(|e| e.response.as_ref()) {
            if r.mode == ResponseMode::Accepted {
                return Some(Overall::Strong);
            }
        }
        self.reassessment
            .as_ref()
            .or(self.assessment.as_ref())
            .map(|a| a.overall)
    }
}
