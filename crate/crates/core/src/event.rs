//! Raw session events and their validation.

use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Kind of edit a design tool reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionType {
    Create,
    Delete,
    Move,
    Resize,
    Rotate,
    Reparent,
    PropertyChange,
    TextEdit,
}

impl ActionType {
    pub const ALL: [ActionType; 8] = [
        ActionType::Create,
        ActionType::Delete,
        ActionType::Move,
        ActionType::Resize,
        ActionType::Rotate,
        ActionType::Reparent,
        ActionType::PropertyChange,
        ActionType::TextEdit,
    ];

    /// Layout-related actions change shape or position (hierarchy moves
    /// included). Everything else counts as style-related.
    pub fn is_layout(self) -> bool {
        matches!(
            self,
            ActionType::Move | ActionType::Resize | ActionType::Rotate | ActionType::Reparent
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActionType::Create => "CREATE",
            ActionType::Delete => "DELETE",
            ActionType::Move => "MOVE",
            ActionType::Resize => "RESIZE",
            ActionType::Rotate => "ROTATE",
            ActionType::Reparent => "REPARENT",
            ActionType::PropertyChange => "PROPERTY_CHANGE",
            ActionType::TextEdit => "TEXT_EDIT",
        }
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Old/new property value. Nested structures arrive pre-serialized as text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Text(String),
}

/// Canvas-space rectangle `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox(pub [f64; 4]);

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox([x, y, w, h])
    }
    pub fn x(&self) -> f64 {
        self.0[0]
    }
    pub fn y(&self) -> f64 {
        self.0[1]
    }
    pub fn w(&self) -> f64 {
        self.0[2]
    }
    pub fn h(&self) -> f64 {
        self.0[3]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub idx: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub ts: f64,
    pub element_id: String,
    pub element_name: String,
    pub action_type: ActionType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub property: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub old_value: Option<Scalar>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_value: Option<Scalar>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_ref: Option<String>,
}

impl Action {
    /// Key used for "same action" comparisons: type plus touched property.
    pub fn action_key(&self) -> (ActionType, Option<&str>) {
        (self.action_type, self.property.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    RecordStart,
    RecordStop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub ts: f64,
    pub kind: ControlKind,
}

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SessionEvent {
    Sentence(Sentence),
    Action(Action),
    Control(Control),
}

impl SessionEvent {
    /// Latest instant this event covers.
    pub fn end_time(&self) -> f64 {
        match self {
            SessionEvent::Sentence(s) => s.t_end,
            SessionEvent::Action(a) => a.ts,
            SessionEvent::Control(c) => c.ts,
        }
    }
}

/// Event invariant that a record broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// Sentence ordinals must start at the expected value and have no gaps.
    SentenceDensity,
    /// Sentence ordinals must strictly increase.
    SentenceOrder,
    /// `t_start` must not exceed `t_end`.
    TimeRange,
    /// Times must be finite.
    NonFiniteTime,
    /// Action and control timestamps must be non-decreasing.
    TimestampOrder,
    /// `PROPERTY_CHANGE` needs a non-empty property key.
    MissingProperty,
    /// Bounding boxes need finite coordinates and non-negative extent.
    InvalidBBox,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::SentenceDensity => "density",
            Rule::SentenceOrder => "sentence_order",
            Rule::TimeRange => "time_range",
            Rule::NonFiniteTime => "non_finite_time",
            Rule::TimestampOrder => "timestamp_order",
            Rule::MissingProperty => "missing_property",
            Rule::InvalidBBox => "invalid_bbox",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Incremental checker for event invariants.
///
/// Sessions grow by appending batches, so the checker can resume from a log
/// tail instead of re-reading the whole log.
#[derive(Debug, Clone, Default)]
pub struct EventValidator {
    next_idx: usize,
    last_ts: Option<f64>,
}

impl EventValidator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Resume after a log whose next sentence ordinal is `next_idx` and whose
    /// latest action/control timestamp is `last_ts`.
    pub fn resume(next_idx: usize, last_ts: Option<f64>) -> Self {
        EventValidator { next_idx, last_ts }
    }

    pub fn next_sentence_idx(&self) -> usize {
        self.next_idx
    }

    pub fn last_timestamp(&self) -> Option<f64> {
        self.last_ts
    }

    /// Check one event and advance. On error the validator is left unchanged.
    pub fn check(&mut self, event: &SessionEvent) -> Result<(), Rule> {
        match event {
            SessionEvent::Sentence(s) => {
                if !s.t_start.is_finite() || !s.t_end.is_finite() {
                    return Err(Rule::NonFiniteTime);
                }
                if s.t_start > s.t_end {
                    return Err(Rule::TimeRange);
                }
                if s.idx < self.next_idx {
                    return Err(Rule::SentenceOrder);
                }
                if s.idx > self.next_idx {
                    return Err(Rule::SentenceDensity);
                }
                self.next_idx += 1;
            }
            SessionEvent::Action(a) => {
                self.check_ts(a.ts)?;
                if a.action_type == ActionType::PropertyChange
                    && a.property.as_deref().is_none_or(|p| p.trim().is_empty())
                {
                    return Err(Rule::MissingProperty);
                }
                if let Some(b) = a.bbox {
                    if b.0.iter().any(|v| !v.is_finite()) || b.w() < 0.0 || b.h() < 0.0 {
                        return Err(Rule::InvalidBBox);
                    }
                }
                self.last_ts = Some(a.ts);
            }
            SessionEvent::Control(c) => {
                self.check_ts(c.ts)?;
                self.last_ts = Some(c.ts);
            }
        }
        Ok(())
    }

    fn check_ts(&self, ts: f64) -> Result<(), Rule> {
        if !ts.is_finite() {
            return Err(Rule::NonFiniteTime);
        }
        match self.last_ts {
            Some(last) if ts < last => Err(Rule::TimestampOrder),
            _ => Ok(()),
        }
    }
}

/// Validate a complete log. Returns the zero-based position of the first
/// offending event.
pub fn validate_events(events: &[SessionEvent]) -> Result<(), (usize, Rule)> {
    let mut v = EventValidator::new();
    for (i, e) in events.iter().enumerate() {
        v.check(e).map_err(|r| (i, r))?;
    }
    Ok(())
}
