//! Model-backed segmentation and rationale steps.
//!
//! Schema violations are absorbed here with the documented fallbacks. Only
//! provider outages and render errors escape as [`GatewayError`].

use std::ops::Range;

use stepwise_core::assemble::{assemble_steps, AssemblyInput, OrphanAssigner};
use stepwise_core::rationale::{anchor_question, inference_basis};
use stepwise_core::sentences::{build_groups, singleton_groups};
use stepwise_core::{
    link_actions, AblationCondition, Action, ActionGroup, Assignment, ClarificationExchange,
    CognitiveDecisionStep, DecisionStepSummary, ExplanationAssessment, InferredRationale, LinkSet,
    Overall, ResponseMode, Sentence, SentenceGroup, StepStatus, UserResponse,
    DEFAULT_SIMULTANEITY_WINDOW,
};
use thiserror::Error;

use crate::gateway::schema::{self, SummaryFields};
use crate::gateway::{inputs, Completion, Gateway, GatewayError, TemplateId};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub condition: AblationCondition,
    pub simultaneity_window: f64,
    /// Bound to `{{Few shots}}` in SENTENCE_LINK and RATIONALE_EVAL.
    pub few_shots: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            condition: AblationCondition::default(),
            simultaneity_window: DEFAULT_SIMULTANEITY_WINDOW,
            few_shots: String::new(),
        }
    }
}

/// Schema violations become `None`; everything else propagates.
fn absorb<T>(r: Result<Completion<T>, GatewayError>) -> Result<Option<T>, GatewayError> {
    match r {
        Ok(c) => Ok(Some(c.value)),
        Err(GatewayError::SchemaViolation { template, attempts, message }) => {
            tracing::warn!(%template, attempts, "falling back after schema violation: {message}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// A slice of the session to segment: new sentences and the action range
/// `actions[action_range]` of the session-wide list.
#[derive(Debug, Clone)]
pub struct Window<'a> {
    pub sentences: &'a [Sentence],
    pub actions: &'a [Action],
    pub action_range: Range<usize>,
    /// Transcript of the whole session so far.
    pub transcript: &'a str,
    pub first_step: usize,
}

struct GatewayAssigner<'a> {
    gateway: &'a Gateway,
    transcript: &'a str,
}

impl OrphanAssigner for GatewayAssigner<'_> {
    type Error = GatewayError;

    fn assign(&mut self, orphan: &SentenceGroup, left: &str, right: &str) -> Result<Assignment, GatewayError> {
        let vars = inputs::sentence_assign(self.transcript, &orphan.combined_text, left, right);
        let r = self.gateway.complete(TemplateId::SentenceAssign, &vars, &[], schema::assignment);
        Ok(absorb(r)?.unwrap_or(Assignment::Unrelated))
    }
}

/// Context for rationale work on one step.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub session_id: &'a str,
    pub transcript: &'a str,
    pub actions: &'a [Action],
    /// Summaries of earlier steps, oldest first.
    pub prior: &'a [DecisionStepSummary],
}

#[derive(Debug, Error)]
pub enum ResponseFailure {
    #[error("step has no clarification exchange")]
    NoPendingExchange,
    #[error("question already resolved")]
    AlreadyResolved,
    #[error(transparent)]
    Invalid(#[from] stepwise_core::step::ResponseError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    gateway: Gateway,
    config: PipelineConfig,
}

impl Pipeline {
    pub fn new(gateway: Gateway, config: PipelineConfig) -> Self {
        Pipeline { gateway, config }
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// SENTENCE_LINK, repaired; singletons on schema failure.
    pub fn link_sentences(&self, sentences: &[Sentence]) -> Result<Vec<SentenceGroup>, GatewayError> {
        self.group_with(TemplateId::SentenceLink, inputs::sentence_link(sentences, &self.config.few_shots), sentences)
    }

    /// Transcript-only segmentation for the baseline condition.
    pub fn baseline_groups(&self, sentences: &[Sentence]) -> Result<Vec<SentenceGroup>, GatewayError> {
        self.group_with(TemplateId::BaselineSegment, inputs::baseline_segment(sentences), sentences)
    }

    fn group_with(
        &self,
        template: TemplateId,
        vars: crate::gateway::Variables,
        sentences: &[Sentence],
    ) -> Result<Vec<SentenceGroup>, GatewayError> {
        if sentences.is_empty() {
            return Ok(Vec::new());
        }
        let r = self.gateway.complete(template, &vars, &[], |raw| schema::sentence_groups(raw, sentences));
        Ok(match absorb(r)? {
            Some(proposed) => build_groups(sentences, &proposed),
            None => singleton_groups(sentences),
        })
    }

    /// SA_LINK over the window's groups; empty on schema failure.
    pub fn link_sentence_action(
        &self,
        groups: &[SentenceGroup],
        action_groups: &[ActionGroup],
        actions: &[Action],
    ) -> Result<LinkSet, GatewayError> {
        if groups.is_empty() || action_groups.is_empty() {
            return Ok(LinkSet::new());
        }
        let vars = inputs::sa_link(groups, action_groups, actions);
        let mut images: Vec<String> = Vec::new();
        for r in action_groups.iter().flat_map(|g| &g.action_refs) {
            if let Some(s) = actions.get(*r).and_then(|a| a.snapshot_ref.as_ref()) {
                if !images.contains(s) {
                    images.push(s.clone());
                }
            }
        }
        let r = self.gateway.complete(TemplateId::SaLink, &vars, &images, schema::links);
        let Some((fwd, bwd)) = absorb(r)? else { return Ok(LinkSet::new()) };
        let known_ts: Vec<f64> =
            action_groups.iter().flat_map(|g| &g.action_refs).filter_map(|&r| actions.get(r)).map(|a| a.ts).collect();
        let known_groups: Vec<usize> = groups.iter().map(|g| g.group_id).collect();
        Ok(LinkSet::symmetrized(fwd, bwd, &known_ts, &known_groups))
    }

    /// Segment one window into steps numbered from `window.first_step`.
    pub fn segment(&self, window: &Window<'_>) -> Result<Vec<CognitiveDecisionStep>, GatewayError> {
        let cond = self.config.condition;
        let Some(variant) = cond.grouping else {
            let groups = self.baseline_groups(window.sentences)?;
            return Ok(groups
                .into_iter()
                .enumerate()
                .map(|(k, g)| {
                    let mut step = CognitiveDecisionStep::new(format!("s{}", window.first_step + k));
                    step.sentence_group = Some(g);
                    step
                })
                .collect());
        };

        let groups = if cond.sentence_linking {
            self.link_sentences(window.sentences)?
        } else {
            singleton_groups(window.sentences)
        };
        let range = window.action_range.clone();
        let action_groups = link_actions(
            &window.actions[range.clone()],
            variant,
            self.config.simultaneity_window,
            range.start,
        );
        let links = self.link_sentence_action(&groups, &action_groups, window.actions)?;
        let input = AssemblyInput {
            sentences: window.sentences,
            actions: window.actions,
            sentence_groups: &groups,
            action_groups: &action_groups,
            links: &links,
            assign_orphans: cond.sentence_assigning,
            first_step: window.first_step,
        };
        let mut assigner = GatewayAssigner { gateway: &self.gateway, transcript: window.transcript };
        assemble_steps(&input, &mut assigner)
    }

    pub fn evaluate(&self, text: &str) -> Result<Option<ExplanationAssessment>, GatewayError> {
        let vars = inputs::rationale_eval(text, &self.config.few_shots);
        absorb(self.gateway.complete(TemplateId::RationaleEval, &vars, &[], schema::evaluation))
    }

    fn summarize(
        &self,
        step: &CognitiveDecisionStep,
        ctx: &StepContext<'_>,
        qa: Option<(&str, &str)>,
    ) -> Result<Option<DecisionStepSummary>, GatewayError> {
        let text = inputs::decision_step(step, ctx.actions);
        let (template, vars) = match qa {
            None => (TemplateId::Summary, inputs::summary(ctx.transcript, &text, &step.snapshot_refs)),
            Some((q, a)) => (
                TemplateId::SummaryWithAnswer,
                inputs::summary_with_answer(ctx.transcript, &text, &step.snapshot_refs, q, a),
            ),
        };
        let fields = absorb(self.gateway.complete(template, &vars, &step.snapshot_refs, schema::summary))?;
        Ok(fields.map(|f: SummaryFields| DecisionStepSummary {
            step_id: step.step_id.clone(),
            decision_and_actions: f.decision_and_actions,
            rationale: f.rationale,
            progression: f.progression,
            snapshot_refs: step.snapshot_refs.clone(),
        }))
    }

    fn infer(
        &self,
        step: &CognitiveDecisionStep,
        assessment: &ExplanationAssessment,
        ctx: &StepContext<'_>,
    ) -> Result<(Option<InferredRationale>, Vec<String>), GatewayError> {
        let basis = inference_basis(ctx.prior);
        if basis.is_empty() {
            return Ok((None, Vec::new()));
        }
        let vars = inputs::rationale_infer(
            ctx.transcript,
            &inputs::decision_step(step, ctx.actions),
            assessment.overall,
            &assessment.reason,
            basis,
        );
        let inferred = absorb(self.gateway.complete(TemplateId::RationaleInfer, &vars, &[], schema::inference))?.flatten();
        let ids = match inferred {
            Some(_) => basis.iter().map(|s| s.step_id.clone()).collect(),
            None => Vec::new(),
        };
        Ok((inferred, ids))
    }

    /// Assess a freshly segmented step; question weak or empty ones and
    /// summarize strong ones.
    pub fn process_step(&self, step: &mut CognitiveDecisionStep, ctx: &StepContext<'_>) -> Result<(), GatewayError> {
        if !step.has_explanation() {
            step.status = StepStatus::Unassessed;
            return Ok(());
        }
        let Some(assessment) = self.evaluate(step.text())? else {
            step.status = StepStatus::Unassessed;
            return Ok(());
        };
        step.assessment = Some(assessment.clone());
        if assessment.overall == Overall::Strong {
            step.status = StepStatus::ResolvedStrong;
            step.summary = self.summarize(step, ctx, None)?;
            return Ok(());
        }
        step.status = StepStatus::Assessed;
        let vars = inputs::question_gen(
            ctx.transcript,
            &inputs::decision_step(step, ctx.actions),
            assessment.overall,
            &assessment.reason,
        );
        let Some(question) = absorb(self.gateway.complete(TemplateId::QuestionGen, &vars, &[], schema::question))? else {
            return Ok(());
        };
        let (inferred, basis_ids) = self.infer(step, &assessment, ctx)?;
        step.exchange = Some(ClarificationExchange {
            question_id: format!("{}.{}", ctx.session_id, step.step_id),
            question_text: question,
            anchor: anchor_question(step, ctx.actions),
            inferred_rationale: inferred,
            basis_summary_ids: basis_ids,
            response: None,
        });
        step.status = StepStatus::QuestionPending;
        Ok(())
    }

    /// Apply a user response. Returns `false` when it repeats an accepted
    /// response already on record and nothing changed.
    pub fn process_response(
        &self,
        step: &mut CognitiveDecisionStep,
        response: UserResponse,
        ctx: &StepContext<'_>,
    ) -> Result<bool, ResponseFailure> {
        let exchange = step.exchange.as_ref().ok_or(ResponseFailure::NoPendingExchange)?;
        if !exchange.is_open() {
            return match &exchange.response {
                Some(prev)
                    if prev.mode == ResponseMode::Accepted
                        && response.mode == ResponseMode::Accepted =>
                {
                    Ok(false)
                }
                _ => Err(ResponseFailure::AlreadyResolved),
            };
        }
        exchange.check_response(&response)?;
        let question = exchange.question_text.clone();
        let inferred = exchange.inferred_rationale.clone();

        match response.mode {
            ResponseMode::Rejected => {}
            ResponseMode::Accepted => {
                let inferred = inferred.ok_or(stepwise_core::step::ResponseError::NothingToAccept)?;
                let mut summary = self.summarize(step, ctx, Some((&question, &inferred.text)))?;
                if let Some(s) = &mut summary {
                    s.rationale = inferred.text.clone();
                }
                step.summary = summary;
                step.status = StepStatus::ResolvedStrong;
            }
            ResponseMode::Answered | ResponseMode::Supplemented => {
                let answer = response.answer_text.as_deref().unwrap_or("").trim().to_string();
                let combined = format!("{} {}", step.text().trim(), answer);
                step.reassessment = self.evaluate(&combined)?;
                step.summary = self.summarize(step, ctx, Some((&question, &answer)))?;
                step.status = match step.reassessment.as_ref().map(|a| a.overall) {
                    Some(Overall::Strong) => StepStatus::ResolvedStrong,
                    _ => StepStatus::ResolvedWeak,
                };
            }
        }
        if let Some(ex) = step.exchange.as_mut() {
            ex.response = Some(response);
        }
        Ok(true)
    }
}
