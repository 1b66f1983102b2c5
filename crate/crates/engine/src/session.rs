//! Per-session state machine: event ingestion, triggered window processing,
//! clarification responses and documentation export.
//!
//! All derived state is a deterministic function of the ordered sequence of
//! appends and responses, given a deterministic provider.

use serde::{Deserialize, Serialize};
use stepwise_core::docs::export_partial;
use stepwise_core::sentences::join_texts;
use stepwise_core::{
    export_documentation, should_trigger, Action, Anchor, BufferState, CognitiveDecisionStep,
    ControlKind, DecisionStepSummary, Documentation, EventValidator, InferredRationale, Rule,
    Sentence, SessionEvent, StepStatus, UserResponse,
};
use thiserror::Error;

use crate::gateway::GatewayError;
use crate::pipeline::{Pipeline, ResponseFailure, StepContext, Window};

#[derive(Debug, Error)]
pub enum SessionError {
    /// `index` is the 0-based position in the rejected batch.
    #[error("event {index}: invariant violated: {rule}")]
    InvalidEvent { index: usize, rule: Rule },
    #[error("unknown question `{0}`")]
    UnknownQuestion(String),
    #[error(transparent)]
    Response(#[from] ResponseFailure),
}

/// When a question was raised.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    pub step_id: String,
    pub revision: u64,
}

/// Question as served to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionView {
    pub question_id: String,
    pub step_id: String,
    pub revision: u64,
    pub question: String,
    pub anchor: Option<Anchor>,
    pub inferred_rationale: Option<InferredRationale>,
    pub snapshot_refs: Vec<String>,
    pub status: StepStatus,
    pub open: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppendReport {
    pub accepted: usize,
    pub windows: usize,
    /// Last provider failure hit while processing, if any.
    pub provider_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub revision: u64,
    pub sentences: Vec<Sentence>,
    pub actions: Vec<Action>,
    pub processed_sentences: usize,
    pub processed_actions: usize,
    pub steps: Vec<CognitiveDecisionStep>,
    pub questions: Vec<QuestionRecord>,
    pub recording: bool,
    /// Timestamp of the last action, or of the last record_start if later.
    pub pause_origin: Option<f64>,
    /// Latest action or control timestamp, for ordering checks.
    pub last_ts: Option<f64>,
    /// Latest instant covered by any event.
    pub latest_time: Option<f64>,
    /// Set while a provider failure leaves work unfinished.
    pub incomplete: bool,
}

impl SessionState {
    pub fn new(session_id: impl Into<String>) -> Self {
        SessionState {
            session_id: session_id.into(),
            revision: 0,
            sentences: Vec::new(),
            actions: Vec::new(),
            processed_sentences: 0,
            processed_actions: 0,
            steps: Vec::new(),
            questions: Vec::new(),
            recording: false,
            pause_origin: None,
            last_ts: None,
            latest_time: None,
            incomplete: false,
        }
    }

    fn validate(&self, events: &[SessionEvent]) -> Result<(), SessionError> {
        let mut v = EventValidator::resume(self.sentences.len(), self.last_ts);
        for (index, e) in events.iter().enumerate() {
            v.check(e).map_err(|rule| SessionError::InvalidEvent { index, rule })?;
        }
        Ok(())
    }

    fn push(&mut self, event: SessionEvent) -> bool {
        let t = event.end_time();
        self.latest_time = Some(self.latest_time.map_or(t, |l| l.max(t)));
        match event {
            SessionEvent::Sentence(s) => self.sentences.push(s),
            SessionEvent::Action(a) => {
                self.last_ts = Some(a.ts);
                self.pause_origin = Some(a.ts);
                self.actions.push(a);
            }
            SessionEvent::Control(c) => {
                self.last_ts = Some(c.ts);
                match c.kind {
                    ControlKind::RecordStart => {
                        self.recording = true;
                        self.pause_origin = Some(self.pause_origin.map_or(c.ts, |p| p.max(c.ts)));
                    }
                    ControlKind::RecordStop => {
                        self.recording = false;
                        return true;
                    }
                }
            }
        }
        false
    }

    pub fn buffer(&self, flush: bool) -> BufferState {
        let pause = match (self.latest_time, self.pause_origin) {
            (Some(now), Some(origin)) => (now - origin).max(0.0),
            _ => 0.0,
        };
        BufferState {
            pending_sentences: self.sentences.len() - self.processed_sentences,
            pending_actions: self.actions.len() - self.processed_actions,
            seconds_since_last_action: pause,
            recording: self.recording,
            flush,
        }
    }

    /// Buffer state at the moment `event` begins, before it is stored.
    fn paused_before(&self, event: &SessionEvent) -> BufferState {
        let start = match event {
            SessionEvent::Sentence(s) => s.t_start,
            SessionEvent::Action(a) => a.ts,
            SessionEvent::Control(c) => c.ts,
        };
        let mut state = self.buffer(false);
        state.seconds_since_last_action = self.pause_origin.map_or(0.0, |o| (start - o).max(0.0));
        state
    }

    /// Validate and store a batch without processing. All or nothing.
    pub fn ingest(&mut self, events: Vec<SessionEvent>) -> Result<usize, SessionError> {
        self.validate(&events)?;
        let n = events.len();
        for e in events {
            self.push(e);
        }
        self.revision += 1;
        Ok(n)
    }

    /// Validate and store a batch, checking the trigger after every event
    /// and processing the pending window whenever it fires.
    pub fn append(&mut self, pipeline: &Pipeline, events: Vec<SessionEvent>) -> Result<AppendReport, SessionError> {
        self.validate(&events)?;
        self.revision += 1;
        let mut report = AppendReport { accepted: events.len(), ..Default::default() };
        for e in events {
            // A pause that ended with this event closes the window before it.
            if should_trigger(&self.paused_before(&e)) {
                report.windows += 1;
                if let Err(err) = self.process(pipeline) {
                    report.provider_error = Some(err.to_string());
                }
            }
            let stop = self.push(e);
            if should_trigger(&self.buffer(stop)) {
                report.windows += 1;
                if let Err(err) = self.process(pipeline) {
                    report.provider_error = Some(err.to_string());
                }
            }
        }
        Ok(report)
    }

    pub fn transcript(&self) -> String {
        join_texts(self.sentences.iter().map(|s| s.text.as_str()))
    }

    fn prior_summaries(&self, before: usize) -> Vec<DecisionStepSummary> {
        self.steps[..before].iter().filter_map(|s| s.summary.clone()).collect()
    }

    /// Segment the pending window, then run rationale processing on every
    /// step still in `segmented`. A provider failure stops the run; steps
    /// finished before it stay committed.
    pub fn process(&mut self, pipeline: &Pipeline) -> Result<(), GatewayError> {
        let result = self.process_inner(pipeline);
        self.incomplete = result.is_err();
        result
    }

    fn process_inner(&mut self, pipeline: &Pipeline) -> Result<(), GatewayError> {
        let transcript = self.transcript();
        let mut changed = false;
        if self.processed_sentences < self.sentences.len() || self.processed_actions < self.actions.len() {
            let window = Window {
                sentences: &self.sentences[self.processed_sentences..],
                actions: &self.actions,
                action_range: self.processed_actions..self.actions.len(),
                transcript: &transcript,
                first_step: self.steps.len(),
            };
            let steps = pipeline.segment(&window)?;
            self.steps.extend(steps);
            self.processed_sentences = self.sentences.len();
            self.processed_actions = self.actions.len();
            changed = true;
        }
        let mut outcome = Ok(());
        for i in 0..self.steps.len() {
            if self.steps[i].status != StepStatus::Segmented {
                continue;
            }
            let prior = self.prior_summaries(i);
            let ctx = StepContext {
                session_id: &self.session_id,
                transcript: &transcript,
                actions: &self.actions,
                prior: &prior,
            };
            let mut step = self.steps[i].clone();
            if let Err(e) = pipeline.process_step(&mut step, &ctx) {
                outcome = Err(e);
                break;
            }
            if let Some(ex) = &step.exchange {
                self.questions.push(QuestionRecord {
                    question_id: ex.question_id.clone(),
                    step_id: step.step_id.clone(),
                    revision: self.revision + 1,
                });
            }
            self.steps[i] = step;
            changed = true;
        }
        if changed {
            self.revision += 1;
        }
        outcome
    }

    /// Process everything still pending, regardless of the trigger.
    pub fn flush(&mut self, pipeline: &Pipeline) -> Result<(), GatewayError> {
        self.process(pipeline)
    }

    pub fn step_for_question(&self, question_id: &str) -> Option<usize> {
        self.steps
            .iter()
            .position(|s| s.exchange.as_ref().is_some_and(|e| e.question_id == question_id))
    }

    /// Apply a response. Returns whether state changed.
    pub fn respond(
        &mut self,
        pipeline: &Pipeline,
        question_id: &str,
        response: UserResponse,
    ) -> Result<bool, SessionError> {
        let i = self
            .step_for_question(question_id)
            .ok_or_else(|| SessionError::UnknownQuestion(question_id.to_string()))?;
        let transcript = self.transcript();
        let prior = self.prior_summaries(i);
        let ctx = StepContext {
            session_id: &self.session_id,
            transcript: &transcript,
            actions: &self.actions,
            prior: &prior,
        };
        let mut step = self.steps[i].clone();
        let changed = pipeline.process_response(&mut step, response, &ctx)?;
        if changed {
            self.steps[i] = step;
            self.revision += 1;
        }
        Ok(changed)
    }

    pub fn questions_since(&self, since: u64) -> Vec<QuestionView> {
        self.questions
            .iter()
            .filter(|q| q.revision > since)
            .filter_map(|q| {
                let step = self.steps.iter().find(|s| s.step_id == q.step_id)?;
                let ex = step.exchange.as_ref()?;
                Some(QuestionView {
                    question_id: q.question_id.clone(),
                    step_id: q.step_id.clone(),
                    revision: q.revision,
                    question: ex.question_text.clone(),
                    anchor: ex.anchor.clone(),
                    inferred_rationale: ex.inferred_rationale.clone(),
                    snapshot_refs: step.snapshot_refs.clone(),
                    status: step.status,
                    open: ex.is_open(),
                })
            })
            .collect()
    }

    /// Strict export, or a lenient one flagged incomplete when a step is
    /// unfinished or a provider failure is outstanding.
    pub fn documentation(&self) -> Documentation {
        match export_documentation(&self.session_id, &self.steps) {
            Ok(doc) if !self.incomplete => doc,
            _ => export_partial(&self.session_id, &self.steps, true),
        }
    }
}
