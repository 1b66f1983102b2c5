//! Authored sessions with known structure, and a responder that answers
//! every template from them.
//!
//! A [`Scenario`] lists decision steps with their sentences, actions and
//! expected grading. [`Scenario::timeline`] lays it out as a session log and
//! gold segmentation; [`ScenarioResponder`] plays the model when recording
//! scripted fixtures for that log.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use stepwise_core::event::{Control, ControlKind};
use stepwise_core::sentences::join_texts;
use stepwise_core::{Action, ActionType, BBox, Scalar, Sentence, SessionEvent};
use thiserror::Error;

use crate::eval::{Gold, StepLabel};
use crate::gateway::template::TemplateId;
use crate::gateway::{ProviderError, Request, Responder};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub session_id: String,
    /// Sentence ordinals where sentence linking wrongly starts a new group.
    #[serde(default)]
    pub link_breaks: Vec<usize>,
    pub steps: Vec<ScenarioStep>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioStep {
    pub sentences: Vec<String>,
    /// Positions (within the step) of sentences that do not talk about the
    /// step's actions.
    #[serde(default)]
    pub silent: Vec<usize>,
    #[serde(default)]
    pub actions: Vec<ScenarioAction>,
    pub categories: Vec<String>,
    pub reason: String,
    pub summary: ScenarioSummary,
    #[serde(default)]
    pub question: Option<String>,
    #[serde(default)]
    pub inferred: Option<ScenarioInference>,
    /// Grade of the explanation once an answer is appended.
    #[serde(default)]
    pub answer_categories: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioAction {
    pub element_id: String,
    pub element_name: String,
    pub action_type: ActionType,
    #[serde(default)]
    pub property: Option<String>,
    #[serde(default)]
    pub old_value: Option<Scalar>,
    #[serde(default)]
    pub new_value: Option<Scalar>,
    #[serde(default)]
    pub bbox: Option<BBox>,
    /// Lands 0.1 s after the previous action instead of taking its own
    /// slot in the step.
    #[serde(default)]
    pub simultaneous: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub decision_and_actions: String,
    pub rationale: String,
    pub progression: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioInference {
    pub text: String,
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("sentence `{0}` appears twice")]
    DuplicateSentence(String),
    #[error("sentence `{0}` is contained in `{1}`")]
    NestedSentence(String, String),
    #[error("scenario {0} has no steps")]
    Empty(String),
    #[error("step {step} of {session}: {message}")]
    Step { session: String, step: usize, message: String },
}

/// A scenario laid out in time.
#[derive(Debug, Clone)]
pub struct Timeline {
    pub events: Vec<SessionEvent>,
    /// Step of each sentence, by ordinal.
    pub sentence_step: Vec<usize>,
    /// Step of each action, keyed by timestamp in tenths of a second.
    pub action_step: BTreeMap<i64, usize>,
}

const SENTENCE_TENTHS: i64 = 30;
const SPOKEN_TENTHS: i64 = 28;
const MIN_GAP_TENTHS: i64 = 5;
const SIMULTANEOUS_TENTHS: i64 = 1;
const STEP_GAP_TENTHS: i64 = 20;

fn secs(tenths: i64) -> f64 {
    tenths as f64 / 10.0
}

fn tenths(t: f64) -> i64 {
    (t * 10.0).round() as i64
}

impl Scenario {
    pub fn sentence_count(&self) -> usize {
        self.steps.iter().map(|s| s.sentences.len()).sum()
    }

    pub fn action_count(&self) -> usize {
        self.steps.iter().map(|s| s.actions.len()).sum()
    }

    pub fn check(&self) -> Result<(), ScenarioError> {
        if self.steps.is_empty() {
            return Err(ScenarioError::Empty(self.session_id.clone()));
        }
        for (i, step) in self.steps.iter().enumerate() {
            let bad = |message: &str| ScenarioError::Step {
                session: self.session_id.clone(),
                step: i,
                message: message.to_string(),
            };
            if step.sentences.is_empty() {
                return Err(bad("no sentences"));
            }
            if step.silent.iter().any(|&p| p >= step.sentences.len()) {
                return Err(bad("silent position out of range"));
            }
            if step.categories.is_empty() {
                return Err(bad("no categories"));
            }
            if step.actions.first().is_some_and(|a| a.simultaneous) {
                return Err(bad("first action cannot be simultaneous"));
            }
        }
        Ok(())
    }

    /// Session log: a record start, then each step's sentences (3 s apart)
    /// with its actions spread across them, 2 s of silence between steps,
    /// and a record stop. `snapshot` names the screenshot for each action.
    pub fn timeline(&self, mut snapshot: impl FnMut(usize, &Action) -> Option<String>) -> Timeline {
        let mut timed: Vec<(i64, SessionEvent)> = Vec::new();
        let mut sentence_step = Vec::new();
        let mut action_step = BTreeMap::new();
        timed.push((0, SessionEvent::Control(Control { ts: 0.0, kind: ControlKind::RecordStart })));
        let mut t = STEP_GAP_TENTHS;
        for (k, step) in self.steps.iter().enumerate() {
            let start = t;
            for text in &step.sentences {
                let idx = sentence_step.len();
                sentence_step.push(k);
                let end = t + SPOKEN_TENTHS;
                timed.push((
                    end,
                    SessionEvent::Sentence(Sentence { idx, t_start: secs(t), t_end: secs(end), text: text.clone() }),
                ));
                t += SENTENCE_TENTHS;
            }
            // Actions are spread evenly over the step's talk.
            let span = t - start;
            let paced = step.actions.iter().filter(|a| !a.simultaneous).count() as i64;
            let mut slot = 0;
            let mut last = start;
            for a in &step.actions {
                let ts = if a.simultaneous {
                    last + SIMULTANEOUS_TENTHS
                } else {
                    slot += 1;
                    (start + span * (2 * slot - 1) / (2 * paced)).max(last + MIN_GAP_TENTHS)
                };
                last = ts;
                let mut action = Action {
                    ts: secs(ts),
                    element_id: a.element_id.clone(),
                    element_name: a.element_name.clone(),
                    action_type: a.action_type,
                    property: a.property.clone(),
                    old_value: a.old_value.clone(),
                    new_value: a.new_value.clone(),
                    bbox: a.bbox,
                    snapshot_ref: None,
                };
                action.snapshot_ref = snapshot(k, &action);
                action_step.insert(ts, k);
                timed.push((ts, SessionEvent::Action(action)));
            }
            t = t.max(last + MIN_GAP_TENTHS) + STEP_GAP_TENTHS;
        }
        timed.push((t, SessionEvent::Control(Control { ts: secs(t), kind: ControlKind::RecordStop })));
        timed.sort_by_key(|(at, _)| *at);
        Timeline { events: timed.into_iter().map(|(_, e)| e).collect(), sentence_step, action_step }
    }

    /// Gold segmentation and per-step grades.
    pub fn gold(&self) -> Gold {
        let mut boundaries = Vec::new();
        let mut n = 0;
        let mut labels = Vec::new();
        for (k, step) in self.steps.iter().enumerate() {
            if n > 0 {
                boundaries.push(n);
            }
            n += step.sentences.len();
            let codes: Vec<stepwise_core::CategoryCode> =
                step.categories.iter().filter_map(|c| c.parse().ok()).collect();
            if let Ok(a) = stepwise_core::ExplanationAssessment::new(codes, String::new()) {
                labels.push(StepLabel { step_id: format!("s{k}"), overall: a.overall });
            }
        }
        Gold { n_units: n, boundaries, step_labels: Some(labels) }
    }
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Loc {
    scenario: usize,
    step: usize,
    /// Ordinal in the session log.
    idx: usize,
    silent: bool,
}

/// Answers every template from a set of scenarios.
///
/// Sentence linking follows the authored steps (plus `link_breaks`); an
/// action set links to every group that talks about a step one of its
/// actions belongs to; orphans go to the neighbour from their own step;
/// grades, questions, inferences and summaries are read from the step whose
/// sentences the input contains.
#[derive(Debug, Clone)]
pub struct ScenarioResponder {
    scenarios: Vec<Scenario>,
    timelines: Vec<Timeline>,
    sentences: Vec<(String, Loc)>,
}

impl ScenarioResponder {
    pub fn new(scenarios: Vec<Scenario>) -> Result<Self, ScenarioError> {
        let mut sentences: Vec<(String, Loc)> = Vec::new();
        let mut timelines = Vec::new();
        for (si, sc) in scenarios.iter().enumerate() {
            sc.check()?;
            timelines.push(sc.timeline(|_, _| None));
            let mut idx = 0;
            for (k, step) in sc.steps.iter().enumerate() {
                for (p, text) in step.sentences.iter().enumerate() {
                    let loc = Loc { scenario: si, step: k, idx, silent: step.silent.contains(&p) };
                    sentences.push((normalize(text), loc));
                    idx += 1;
                }
            }
        }
        for (i, (a, _)) in sentences.iter().enumerate() {
            for (j, (b, _)) in sentences.iter().enumerate() {
                if i != j && a == b {
                    return Err(ScenarioError::DuplicateSentence(a.clone()));
                }
                if i != j && b.contains(a.as_str()) {
                    return Err(ScenarioError::NestedSentence(a.clone(), b.clone()));
                }
            }
        }
        Ok(ScenarioResponder { scenarios, timelines, sentences })
    }

    /// Sentences whose text occurs in `text`, in session order.
    fn locate(&self, text: &str) -> Vec<Loc> {
        let t = normalize(text);
        let mut found: Vec<Loc> =
            self.sentences.iter().filter(|(s, _)| t.contains(s.as_str())).map(|(_, l)| *l).collect();
        found.sort();
        found
    }

    fn exact(&self, text: &str) -> Option<Loc> {
        let t = normalize(text);
        self.sentences.iter().find(|(s, _)| *s == t).map(|(_, l)| *l)
    }

    /// The step most of the located sentences belong to.
    fn step_of(&self, text: &str) -> Result<(usize, usize), ProviderError> {
        let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for l in self.locate(text) {
            *counts.entry((l.scenario, l.step)).or_default() += 1;
        }
        let best = counts.values().copied().max();
        counts
            .into_iter()
            .find(|(_, c)| Some(*c) == best)
            .map(|(k, _)| k)
            .ok_or_else(|| ProviderError(format!("no scenario step matches `{}`", truncate(text))))
    }

    fn step(&self, at: (usize, usize)) -> &ScenarioStep {
        &self.scenarios[at.0].steps[at.1]
    }

    fn runs(&self, req: &Request<'_>, var: &str, with_breaks: bool) -> Result<Vec<Vec<(u64, String)>>, ProviderError> {
        let items = indexed(&parse_var(req, var));
        let mut runs: Vec<Vec<(u64, String)>> = Vec::new();
        let mut prev: Option<(usize, usize)> = None;
        for (idx, text) in items {
            let loc = self
                .exact(&text)
                .ok_or_else(|| ProviderError(format!("unknown sentence `{}`", truncate(&text))))?;
            let key = (loc.scenario, loc.step);
            let broken = with_breaks && self.scenarios[loc.scenario].link_breaks.contains(&loc.idx);
            match runs.last_mut() {
                Some(run) if prev == Some(key) && !broken => run.push((idx, text)),
                _ => runs.push(vec![(idx, text)]),
            }
            prev = Some(key);
        }
        Ok(runs)
    }

    fn sentence_link(&self, req: &Request<'_>) -> Result<String, ProviderError> {
        let runs = self.runs(req, "transcript in sentence level", true)?;
        Ok(groups_text(runs.iter().map(Vec::as_slice)))
    }

    fn baseline(&self, req: &Request<'_>) -> Result<String, ProviderError> {
        let runs = self.runs(req, "transcript", false)?;
        let halves = runs.iter().flat_map(|run| {
            let (a, b) = run.split_at(run.len().div_ceil(2));
            [a, b].into_iter().filter(|h| !h.is_empty())
        });
        Ok(groups_text(halves))
    }

    fn sa_link(&self, req: &Request<'_>) -> Result<String, ProviderError> {
        let segmented = parse_var(req, "segmented_transcripts");
        let sets = parse_var(req, "sets_of_design_action_and_screenshot");
        let groups: Vec<(String, Vec<Loc>)> = segmented
            .as_object()
            .into_iter()
            .flatten()
            .map(|(gid, text)| (gid.clone(), self.locate(text.as_str().unwrap_or(""))))
            .collect();
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        for l in groups.iter().flat_map(|(_, ls)| ls) {
            *votes.entry(l.scenario).or_default() += 1;
        }
        let Some(scenario) = votes.iter().max_by_key(|(s, c)| (**c, std::cmp::Reverse(**s))).map(|(s, _)| *s) else {
            return Ok(json!({"links": {}, "reversed_links": {}}).to_string());
        };
        let timeline = &self.timelines[scenario];

        let mut links: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut reversed: BTreeMap<String, Vec<Value>> = BTreeMap::new();
        for set in sets.as_array().into_iter().flatten() {
            let times: Vec<Value> = set
                .get("actions")
                .and_then(Value::as_array)
                .into_iter()
                .flatten()
                .filter_map(|a| a.get("timestamp").cloned())
                .collect();
            let steps: BTreeSet<usize> = times
                .iter()
                .filter_map(Value::as_f64)
                .filter_map(|t| timeline.action_step.get(&tenths(t)).copied())
                .collect();
            for (gid, locs) in &groups {
                if !locs.iter().any(|l| l.scenario == scenario && steps.contains(&l.step) && !l.silent) {
                    continue;
                }
                for t in &times {
                    links.entry(t.to_string()).or_default().push(gid.clone());
                    reversed.entry(gid.clone()).or_default().push(t.clone());
                }
            }
        }
        Ok(json!({"links": links, "reversed_links": reversed}).to_string())
    }

    fn assign(&self, req: &Request<'_>) -> Result<String, ProviderError> {
        let orphan = self.step_of(var(req, "unassigned_grouped_sentence"))?;
        let steps = |name: &str| -> BTreeSet<(usize, usize)> {
            self.locate(var(req, name)).into_iter().map(|l| (l.scenario, l.step)).collect()
        };
        Ok(if steps("left_grouped_sentence").contains(&orphan) {
            "left"
        } else if steps("right_grouped_sentence").contains(&orphan) {
            "right"
        } else {
            "unrelated"
        }
        .to_string())
    }

    fn evaluate(&self, req: &Request<'_>) -> Result<String, ProviderError> {
        let text = var(req, "decision_step");
        let at = self.step_of(text)?;
        let step = self.step(at);
        let mut rest = normalize(text);
        for (s, _) in &self.sentences {
            rest = rest.replacen(s.as_str(), "", 1);
        }
        let answered = rest.chars().any(char::is_alphanumeric);
        let (categories, reason) = match (answered, &step.answer_categories) {
            (false, _) => (step.categories.clone(), step.reason.clone()),
            (true, Some(c)) => (c.clone(), "The answer gives the reason behind the change.".to_string()),
            (true, None) => (vec!["S-SR".to_string()], "The answer gives the reason behind the change.".to_string()),
        };
        Ok(json!({"reason": reason, "categories": categories}).to_string())
    }

    fn question(&self, req: &Request<'_>) -> Result<String, ProviderError> {
        let step = self.step(self.step_of(&explanation_of(req))?);
        let q = step.question.clone().unwrap_or_else(|| "What made you decide on this change?".into());
        Ok(json!({"question": q}).to_string())
    }

    fn infer(&self, req: &Request<'_>) -> Result<String, ProviderError> {
        let step = self.step(self.step_of(&explanation_of(req))?);
        Ok(match &step.inferred {
            Some(i) => json!({"inferred_rationale": i.text, "reasoning": i.reasoning}),
            None => json!({"inferred_rationale": "None", "reasoning": "None"}),
        }
        .to_string())
    }

    fn summary(&self, req: &Request<'_>, with_answer: bool) -> Result<String, ProviderError> {
        let s = &self.step(self.step_of(&explanation_of(req))?).summary;
        let answer = var(req, "answer").trim();
        let rationale = if with_answer && !answer.is_empty() { answer } else { s.rationale.as_str() };
        Ok(json!({
            "decision_and_actions": s.decision_and_actions,
            "rationale": rationale,
            "progression": s.progression,
        })
        .to_string())
    }
}

impl Responder for ScenarioResponder {
    fn respond(&self, req: &Request<'_>) -> Result<String, ProviderError> {
        match req.template {
            TemplateId::SentenceLink => self.sentence_link(req),
            TemplateId::BaselineSegment => self.baseline(req),
            TemplateId::SaLink => self.sa_link(req),
            TemplateId::SentenceAssign => self.assign(req),
            TemplateId::RationaleEval => self.evaluate(req),
            TemplateId::QuestionGen => self.question(req),
            TemplateId::RationaleInfer => self.infer(req),
            TemplateId::Summary => self.summary(req, false),
            TemplateId::SummaryWithAnswer => self.summary(req, true),
        }
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(60).collect()
}

fn parse_var(req: &Request<'_>, name: &str) -> Value {
    req.variables.get(name).and_then(|s| serde_json::from_str(s).ok()).unwrap_or(Value::Null)
}

fn var<'a>(req: &'a Request<'_>, name: &str) -> &'a str {
    req.variables.get(name).map(String::as_str).unwrap_or("")
}

fn explanation_of(req: &Request<'_>) -> String {
    let step = var(req, "decision_step");
    match serde_json::from_str::<Value>(step) {
        Ok(v) => v.get("explanation").and_then(Value::as_str).unwrap_or("").to_string(),
        Err(_) => step.to_string(),
    }
}

fn indexed(v: &Value) -> Vec<(u64, String)> {
    v.as_array()
        .into_iter()
        .flatten()
        .filter_map(|s| Some((s.get("index")?.as_u64()?, s.get("sentence")?.as_str()?.to_string())))
        .collect()
}

/// `{"0": "sentences of group 0", ...}` in the template's output shape.
fn groups_text<'a>(groups: impl Iterator<Item = &'a [(u64, String)]>) -> String {
    let m: Map<String, Value> = groups
        .enumerate()
        .map(|(i, g)| (i.to_string(), json!(join_texts(g.iter().map(|(_, t)| t.as_str())))))
        .collect();
    Value::Object(m).to_string()
}
