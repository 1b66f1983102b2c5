#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use proptest::prelude::*;
use serde::Deserialize;
use serde_json::json;
use stepwise::gateway::responders::{Heuristic, Scripted};
use stepwise::gateway::{Gateway, ProviderError, Request, Responder, TemplateId};
use stepwise::pipeline::{Pipeline, PipelineConfig};
use stepwise::scenario::{Scenario, ScenarioResponder};
use stepwise::service::{MemoryStorage, ResponseBody, Service};
use stepwise::store::read_session_log;
use stepwise_core::{Action, ActionType, Control, ControlKind, ResponseMode, Sentence, SessionEvent};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

pub fn golden_dir() -> PathBuf {
    data_dir().join("golden")
}

pub fn golden_events() -> Vec<SessionEvent> {
    read_session_log(&golden_dir().join("session.jsonl")).expect("golden log")
}

pub fn golden_scenario() -> Scenario {
    let text = fs::read_to_string(data_dir().join("scenarios").join("golden.json")).expect("golden scenario");
    serde_json::from_str(&text).expect("golden scenario parses")
}

pub fn scripted_pipeline() -> Pipeline {
    Pipeline::new(Gateway::new(Arc::new(Scripted::new(golden_dir().join("fixtures")))), PipelineConfig::default())
}

pub fn oracle_pipeline() -> Pipeline {
    let oracle = ScenarioResponder::new(vec![golden_scenario()]).expect("oracle");
    Pipeline::new(Gateway::new(Arc::new(oracle)), PipelineConfig::default())
}

pub fn heuristic_pipeline() -> Pipeline {
    Pipeline::new(Gateway::new(Arc::new(Heuristic)), PipelineConfig::default())
}

#[derive(Debug, Clone, Deserialize)]
pub struct RecordedResponse {
    pub step_id: String,
    pub mode: ResponseMode,
    pub answer_text: Option<String>,
}

/// Responses the golden fixtures were recorded with.
pub fn golden_responses() -> Vec<RecordedResponse> {
    let text = fs::read_to_string(golden_dir().join("responses.json")).expect("responses");
    serde_json::from_str(&text).expect("responses parse")
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_stepwise"))
}

/// Everything observable after each mutation.
#[derive(Debug, PartialEq)]
pub struct Trace {
    pub revisions: Vec<u64>,
    pub steps: String,
    pub questions: Vec<(String, String, u64)>,
}

pub fn body(mode: ResponseMode, answer: Option<&str>) -> ResponseBody {
    ResponseBody { mode, answer_text: answer.map(str::to_string) }
}

/// Drive the golden session through `service` in batches of `chunk`, then
/// submit the recorded responses. `kill` runs before every operation and
/// may swap the service.
pub fn drive(mut service: Service, chunk: usize, mut kill: impl FnMut(usize, Service, &str) -> Service) -> Trace {
    let id = service.create_session().unwrap();
    let mut revisions = Vec::new();
    let mut op = 0;
    for batch in golden_events().chunks(chunk) {
        service = kill(op, service, &id);
        op += 1;
        revisions.push(service.append_events(&id, batch.to_vec()).unwrap().revision);
    }
    for r in golden_responses() {
        service = kill(op, service, &id);
        op += 1;
        let qid = format!("{id}.{}", r.step_id);
        revisions.push(service.submit_response(&qid, body(r.mode, r.answer_text.as_deref())).unwrap().revision);
    }
    let state = service.state(&id).unwrap();
    let mut steps = serde_json::to_value(&state.steps).unwrap();
    // Response timestamps are wall-clock.
    for s in steps.as_array_mut().unwrap() {
        if let Some(r) = s.pointer_mut("/exchange/response/at") {
            *r = serde_json::Value::Null;
        }
    }
    let questions =
        state.questions.iter().map(|q| (q.question_id.replace(&id, "S"), q.step_id.clone(), q.revision)).collect();
    Trace { revisions, steps: steps.to_string().replace(&id, "S"), questions }
}

/// Heuristic answers, plus an inferred rationale whenever one is asked for.
pub struct Inferring;

impl Responder for Inferring {
    fn respond(&self, req: &Request<'_>) -> Result<String, ProviderError> {
        match req.template {
            TemplateId::RationaleInfer => Ok(json!({
                "inferred_rationale": "Keeps the layout consistent with the earlier sections.",
                "reasoning": "Earlier steps settled the same layout."
            })
            .to_string()),
            _ => Heuristic.respond(req),
        }
    }
}

pub fn memory_service(responder: Arc<dyn Responder>) -> Service {
    let pipeline = Pipeline::new(Gateway::new(responder), PipelineConfig::default());
    Service::open(Arc::new(MemoryStorage::new()), pipeline).unwrap()
}

const PHRASES: [&str; 8] = [
    "I'm moving the header card to the left",
    "the button goes under the title because people scan from the top",
    "let's try a darker fill on the banner",
    "I like how the photo looks now",
    "the grid follows the usual eight pixel convention",
    "this text is too small on the footer",
    "now I'll resize the gallery card",
    "making the logo bigger rather than the title",
];

#[derive(Debug, Clone)]
struct Beat {
    phrases: Vec<usize>,
    actions: Vec<(u8, ActionType)>,
    gap: f64,
}

fn beat() -> impl Strategy<Value = Beat> {
    (
        proptest::collection::vec(0..PHRASES.len(), 0..4),
        proptest::collection::vec((0u8..5, proptest::sample::select(ActionType::ALL.to_vec())), 0..5),
        prop_oneof![Just(0.5), Just(1.5), Just(4.0)],
    )
        .prop_map(|(phrases, actions, gap)| Beat { phrases, actions, gap })
}

/// A recorded session: talk and edits interleaved, closed by record_stop.
pub fn fuzz_session() -> impl Strategy<Value = Vec<SessionEvent>> {
    proptest::collection::vec(beat(), 1..8).prop_map(|beats| {
        let mut events = vec![SessionEvent::Control(Control { ts: 0.0, kind: ControlKind::RecordStart })];
        let mut t = 1.0;
        let mut idx = 0;
        for b in beats {
            for &p in &b.phrases {
                events.push(SessionEvent::Sentence(Sentence {
                    idx,
                    t_start: t,
                    t_end: t + 1.0,
                    text: format!("{}.", PHRASES[p]),
                }));
                idx += 1;
                t += 1.2;
            }
            for &(el, ty) in &b.actions {
                events.push(SessionEvent::Action(Action {
                    ts: t,
                    element_id: format!("e{el}"),
                    element_name: format!("Element {el}"),
                    action_type: ty,
                    property: (ty == ActionType::PropertyChange).then(|| "fill".to_string()),
                    old_value: None,
                    new_value: None,
                    bbox: None,
                    snapshot_ref: None,
                }));
                t += 0.3;
            }
            t += b.gap;
        }
        events.push(SessionEvent::Control(Control { ts: t, kind: ControlKind::RecordStop }));
        events
    })
}

pub fn append_in_chunks(service: &Service, events: &[SessionEvent], chunk: usize) -> String {
    let id = service.create_session().unwrap();
    for batch in events.chunks(chunk) {
        service.append_events(&id, batch.to_vec()).unwrap();
    }
    id
}
