//! Core model and algorithms for turning a recorded design session into
//! cognitive decision steps.
//!
//! A session is a stream of timed transcript sentences, tool action events and
//! recording markers. This crate holds everything that can be computed without
//! IO or a language model:
//!
//! - the event model and its validation ([`event`]),
//! - decision steps and their clarification state ([`step`], [`assessment`]),
//! - deterministic action grouping ([`grouping`]), repair of model-proposed
//!   sentence groups ([`sentences`]) and link sets ([`links`]),
//! - assembly of linked groups into ordered steps ([`assemble`]),
//! - the real-time processing trigger ([`trigger`]),
//! - question anchoring ([`rationale`]),
//! - segmentation and rationale-accuracy metrics ([`metrics`]) and ablation
//!   conditions ([`condition`]),
//! - the documentation record ([`docs`]).
//!
//! Model calls live in the `stepwise` crate; anything here that needs one takes
//! a trait object (see [`assemble::OrphanAssigner`]).

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod assemble;
pub mod assessment;
pub mod condition;
pub mod docs;
pub mod event;
pub mod grouping;
pub mod links;
pub mod metrics;
pub mod rationale;
pub mod sentences;
pub mod step;
pub mod trigger;

pub use assemble::{assemble_steps, Assignment, AssemblyInput, OrphanAssigner};
pub use assessment::{aggregate_assessment, CategoryCode, ExplanationAssessment, Overall};
pub use condition::AblationCondition;
pub use docs::{export_documentation, DocEntry, Documentation, ExportError};
pub use event::{
    Action, ActionType, BBox, Control, ControlKind, EventValidator, Rule, Scalar, Sentence,
    SessionEvent,
};
pub use grouping::{link_actions, GroupingVariant, DEFAULT_SIMULTANEITY_WINDOW};
pub use links::{LinkSet, TimeKey};
pub use metrics::{precision_recall_f1, score_rationale_accuracy, window_diff, Segmentation};
pub use step::{
    ActionGroup, Anchor, ClarificationExchange, CognitiveDecisionStep, DecisionStepSummary,
    GroupingBasis, InferredRationale, ResponseMode, SentenceGroup, StepStatus, UserResponse,
};
pub use trigger::{should_trigger, BufferState};
