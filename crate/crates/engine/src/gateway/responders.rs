//! [`Responder`] implementations.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use base64::Engine as _;
use serde_json::{json, Map, Value};

use super::template::TemplateId;
use super::{ProviderError, Request, Responder};
use crate::store::SnapshotStore;

/// Path of the fixture for one call.
pub fn fixture_path(dir: &Path, template: TemplateId, input_hash: &str) -> PathBuf {
    dir.join(template.as_str()).join(format!("{input_hash}.json"))
}

/// Replays `<dir>/<TEMPLATE>/<input_hash>.json`.
///
/// A fixture is `{"response": "..."}` or `{"responses": [...]}`; the latter
/// is indexed by attempt and the last entry repeats.
#[derive(Debug, Clone)]
pub struct Scripted {
    dir: PathBuf,
}

impl Scripted {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Scripted { dir: dir.into() }
    }
}

impl Responder for Scripted {
    fn respond(&self, req: &Request<'_>) -> Result<String, ProviderError> {
        let path = fixture_path(&self.dir, req.template, req.input_hash);
        let text = fs::read_to_string(&path)
            .map_err(|_| ProviderError(format!("no fixture {}/{}.json", req.template, req.input_hash)))?;
        let bad = || ProviderError(format!("malformed fixture {}", path.display()));
        let value: Value = serde_json::from_str(&text).map_err(|_| bad())?;
        if let Some(s) = value.get("response").and_then(Value::as_str) {
            return Ok(s.to_string());
        }
        let list = value.get("responses").and_then(Value::as_array).ok_or_else(bad)?;
        let last = list.len().checked_sub(1).ok_or_else(bad)?;
        list[(req.attempt as usize).min(last)].as_str().map(str::to_string).ok_or_else(bad)
    }
}

/// Passes calls through to `inner` and writes each answer as a fixture.
pub struct Recording<R> {
    inner: R,
    dir: PathBuf,
    seen: Mutex<BTreeMap<(TemplateId, String), Vec<String>>>,
}

impl<R: Responder> Recording<R> {
    pub fn new(inner: R, dir: impl Into<PathBuf>) -> Self {
        Recording { inner, dir: dir.into(), seen: Mutex::default() }
    }
}

impl<R: Responder> Responder for Recording<R> {
    fn respond(&self, req: &Request<'_>) -> Result<String, ProviderError> {
        let out = self.inner.respond(req)?;
        let mut seen = self.seen.lock().unwrap_or_else(|p| p.into_inner());
        let answers = seen.entry((req.template, req.input_hash.to_string())).or_default();
        answers.truncate(req.attempt as usize);
        answers.push(out.clone());
        let body = match answers.as_slice() {
            [one] => json!({ "response": one }),
            many => json!({ "responses": many }),
        };
        let path = fixture_path(&self.dir, req.template, req.input_hash);
        let write = || -> std::io::Result<()> {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&path, serde_json::to_string_pretty(&body)? + "\n")
        };
        write().map_err(|e| ProviderError(format!("writing {}: {e}", path.display())))?;
        Ok(out)
    }
}

/// Answers from a fixed queue, recording what it was asked. An empty queue
/// is a provider failure.
#[derive(Debug, Default)]
pub struct Canned {
    queue: Mutex<VecDeque<String>>,
    prompts: Mutex<Vec<String>>,
    images: Mutex<Vec<Vec<String>>>,
}

impl Canned {
    pub fn new<S: Into<String>>(answers: impl IntoIterator<Item = S>) -> Self {
        Canned { queue: Mutex::new(answers.into_iter().map(Into::into).collect()), ..Default::default() }
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn images(&self) -> Vec<Vec<String>> {
        self.images.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }
}

impl Responder for Canned {
    fn respond(&self, req: &Request<'_>) -> Result<String, ProviderError> {
        self.prompts.lock().unwrap_or_else(|p| p.into_inner()).push(req.prompt.to_string());
        self.images.lock().unwrap_or_else(|p| p.into_inner()).push(req.images.to_vec());
        self.queue
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .pop_front()
            .ok_or_else(|| ProviderError("canned responder exhausted".into()))
    }
}

/// OpenAI-style chat completions over HTTP.
pub struct Live {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    temperature: f64,
    snapshots: Option<SnapshotStore>,
    agent: ureq::Agent,
}

impl Live {
    pub fn new(
        endpoint: String,
        model: String,
        api_key: Option<String>,
        temperature: f64,
        snapshots: Option<SnapshotStore>,
    ) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(180)))
            .build()
            .into();
        Live { endpoint, model, api_key, temperature, snapshots, agent }
    }

    fn image_part(&self, reference: &str) -> Option<Value> {
        let store = self.snapshots.as_ref()?;
        let path = store.resolve(reference)?;
        let bytes = fs::read(&path).ok()?;
        let mime = match path.extension().and_then(|e| e.to_str()) {
            Some("jpg" | "jpeg") => "image/jpeg",
            Some("webp") => "image/webp",
            Some("gif") => "image/gif",
            _ => "image/png",
        };
        let data = base64::engine::general_purpose::STANDARD.encode(bytes);
        Some(json!({"type": "image_url", "image_url": {"url": format!("data:{mime};base64,{data}")}}))
    }
}

impl Responder for Live {
    fn respond(&self, req: &Request<'_>) -> Result<String, ProviderError> {
        let mut content = vec![json!({"type": "text", "text": req.prompt})];
        for r in req.images {
            match self.image_part(r) {
                Some(part) => content.push(part),
                None => tracing::warn!("snapshot {r} not found; sent without it"),
            }
        }
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": content}],
        });
        let mut call = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = call.send_json(&body).map_err(|e| ProviderError(e.to_string()))?;
        let value: Value = resp.body_mut().read_json().map_err(|e| ProviderError(e.to_string()))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderError("response has no choices[0].message.content".into()))
    }
}

/// Rule-based stand-in used by fuzz tests: adjacent sentences sharing a
/// content word are linked, explanations are graded from cue words, and
/// sentence groups link to action sets that name an element they mention.
#[derive(Debug, Clone, Copy, Default)]
pub struct Heuristic;

const STOP_WORDS: &[&str] = &[
    "about", "after", "again", "also", "and", "are", "because", "been", "but", "can", "could",
    "did", "does", "for", "from", "going", "have", "here", "into", "its", "just", "let", "lets",
    "like", "make", "maybe", "more", "need", "not", "now", "okay", "one", "should", "some", "that",
    "the", "then", "there", "they", "think", "this", "want", "was", "what", "will", "with", "would",
    "you", "yeah",
];

fn content_words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .map(str::to_lowercase)
        .filter(|w| w.len() >= 3 && !STOP_WORDS.contains(&w.as_str()))
        .collect()
}

fn has_any(text: &str, cues: &[&str]) -> bool {
    let t = text.to_lowercase();
    cues.iter().any(|c| t.contains(c))
}

fn parse_var(req: &Request<'_>, name: &str) -> Value {
    req.variables
        .get(name)
        .and_then(|s| serde_json::from_str(s).ok())
        .unwrap_or(Value::Null)
}

fn var<'a>(req: &'a Request<'_>, name: &str) -> &'a str {
    req.variables.get(name).map(String::as_str).unwrap_or("")
}

fn indexed(v: &Value) -> Vec<(u64, String)> {
    v.as_array()
        .into_iter()
        .flatten()
        .filter_map(|s| Some((s.get("index")?.as_u64()?, s.get("sentence")?.as_str()?.to_string())))
        .collect()
}

fn groups_json(groups: &[Vec<u64>]) -> String {
    let m: Map<String, Value> =
        groups.iter().enumerate().map(|(i, g)| (i.to_string(), json!(g))).collect();
    Value::Object(m).to_string()
}

fn link_adjacent(sentences: &[(u64, String)]) -> String {
    let mut groups: Vec<Vec<u64>> = Vec::new();
    let mut prev: Option<BTreeSet<String>> = None;
    for (idx, text) in sentences {
        let words = content_words(text);
        match (groups.last_mut(), &prev) {
            (Some(g), Some(p)) if !p.is_disjoint(&words) => g.push(*idx),
            _ => groups.push(vec![*idx]),
        }
        prev = Some(words);
    }
    groups_json(&groups)
}

fn fixed_chunks(sentences: &[(u64, String)]) -> String {
    let groups: Vec<Vec<u64>> =
        sentences.chunks(2).map(|c| c.iter().map(|(i, _)| *i).collect()).collect();
    groups_json(&groups)
}

fn sa_links(req: &Request<'_>) -> String {
    let segmented = parse_var(req, "segmented_transcripts");
    let sets = parse_var(req, "sets_of_design_action_and_screenshot");
    let groups: Vec<(String, BTreeSet<String>)> = segmented
        .as_object()
        .into_iter()
        .flatten()
        .map(|(k, v)| (k.clone(), content_words(v.as_str().unwrap_or(""))))
        .collect();
    let mut links: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut reversed: BTreeMap<String, Vec<Value>> = BTreeMap::new();
    for set in sets.as_array().into_iter().flatten() {
        let actions = set.get("actions").and_then(Value::as_array).cloned().unwrap_or_default();
        let names: BTreeSet<String> = actions
            .iter()
            .filter_map(|a| a.get("element_name")?.as_str())
            .flat_map(content_words)
            .collect();
        for (gid, words) in &groups {
            if names.is_disjoint(words) {
                continue;
            }
            for a in &actions {
                let Some(ts) = a.get("timestamp") else { continue };
                links.entry(ts.to_string()).or_default().push(gid.clone());
                reversed.entry(gid.clone()).or_default().push(ts.clone());
            }
        }
    }
    json!({"links": links, "reversed_links": reversed}).to_string()
}

fn assign(req: &Request<'_>) -> &'static str {
    let orphan = var(req, "unassigned_grouped_sentence");
    let left = var(req, "left_grouped_sentence").trim();
    let right = var(req, "right_grouped_sentence").trim();
    match (left.is_empty(), right.is_empty()) {
        (true, true) => "unrelated",
        (false, true) => "left",
        (true, false) => "right",
        _ if has_any(orphan, &["i'll", "i will", "let's", "going to", "next", "now i"]) => "right",
        _ => "left",
    }
}

fn explanation_of(req: &Request<'_>) -> String {
    let step = var(req, "decision_step");
    match serde_json::from_str::<Value>(step) {
        Ok(v) => v.get("explanation").and_then(Value::as_str).unwrap_or("").to_string(),
        Err(_) => step.to_string(),
    }
}

fn evaluate(text: &str) -> String {
    let table: [(&[&str], &str); 6] = [
        (&["because", "so that", "in order to", "so the", "so users"], "S-SR"),
        (&["convention", "principle", "guideline", "hierarchy", "usually", "standard"], "S-PK"),
        (&["instead of", "rather than", "better than", "compared"], "S-CA"),
        (&["too big", "too small", "too large", "doesn't fit", "not visible"], "W-SR"),
        (&["i like", "looks good", "looks nice", "looks better", "prefer", "pretty"], "W-PK"),
        (&["try", "maybe", "let's see", "or "], "W-CA"),
    ];
    let mut cats: Vec<&str> =
        table.iter().filter(|(cues, _)| has_any(text, cues)).map(|(_, c)| *c).collect();
    if cats.is_empty() {
        cats.push("E");
    }
    json!({"reason": "Cue words in the explanation.", "categories": cats}).to_string()
}

fn summarize(req: &Request<'_>) -> String {
    let text = explanation_of(req);
    let answer = var(req, "answer").trim();
    let rationale = if !answer.is_empty() {
        answer.to_string()
    } else {
        let lower = text.to_lowercase();
        ["because", "so that"]
            .iter()
            .find_map(|c| lower.find(c).map(|i| text[i..].to_string()))
            .unwrap_or_else(|| "Not stated.".into())
    };
    let decision = if text.trim().is_empty() { "Edited the design.".to_string() } else { text };
    json!({
        "decision_and_actions": decision,
        "rationale": rationale,
        "progression": "Continues the session.",
    })
    .to_string()
}

impl Responder for Heuristic {
    fn respond(&self, req: &Request<'_>) -> Result<String, ProviderError> {
        Ok(match req.template {
            TemplateId::SentenceLink => link_adjacent(&indexed(&parse_var(req, "transcript in sentence level"))),
            TemplateId::BaselineSegment => fixed_chunks(&indexed(&parse_var(req, "transcript"))),
            TemplateId::SaLink => sa_links(req),
            TemplateId::SentenceAssign => assign(req).to_string(),
            TemplateId::RationaleEval => evaluate(&explanation_of(req)),
            TemplateId::QuestionGen => json!({
                "question": "Could you tell me why you made this change?"
            })
            .to_string(),
            TemplateId::RationaleInfer => {
                json!({"inferred_rationale": "None", "reasoning": "None"}).to_string()
            }
            TemplateId::Summary | TemplateId::SummaryWithAnswer => summarize(req),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::{inputs, input_hash, Gateway, GatewayError};
    use super::*;
    use std::sync::Arc;
    use stepwise_core::{Overall, Sentence};

    fn sents(texts: &[&str]) -> Vec<Sentence> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Sentence { idx: i, t_start: i as f64, t_end: i as f64 + 1.0, text: t.to_string() })
            .collect()
    }

    #[test]
    fn scripted_lookup_and_absence() {
        let dir = tempfile::tempdir().unwrap();
        let vars = inputs::rationale_eval("X", "");
        let hash = input_hash(TemplateId::RationaleEval, &vars, &[]);
        let gw = Gateway::new(Arc::new(Scripted::new(dir.path())));
        let err = gw.complete(TemplateId::RationaleEval, &vars, &[], super::super::schema::evaluation);
        assert!(matches!(err, Err(GatewayError::ProviderUnavailable { .. })));

        let path = fixture_path(dir.path(), TemplateId::RationaleEval, &hash);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, r#"{"response": "{\"reason\": \"r\", \"categories\": [\"W-PK\"]}"}"#).unwrap();
        let c = gw.complete(TemplateId::RationaleEval, &vars, &[], super::super::schema::evaluation).unwrap();
        assert_eq!(c.value.overall, Overall::Weak);
    }

    #[test]
    fn scripted_responses_indexed_by_attempt() {
        let dir = tempfile::tempdir().unwrap();
        let vars = inputs::rationale_eval("X", "");
        let hash = input_hash(TemplateId::RationaleEval, &vars, &[]);
        let path = fixture_path(dir.path(), TemplateId::RationaleEval, &hash);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, r#"{"responses": ["nope", "{\"reason\": \"r\", \"categories\": [\"E\"]}"]}"#).unwrap();
        let gw = Gateway::new(Arc::new(Scripted::new(dir.path())));
        let c = gw.complete(TemplateId::RationaleEval, &vars, &[], super::super::schema::evaluation).unwrap();
        assert_eq!((c.retries, c.value.overall), (1, Overall::Empty));
    }

    #[test]
    fn recording_round_trips_through_scripted() {
        let dir = tempfile::tempdir().unwrap();
        let rec = Recording::new(Canned::new(["bad", "{\"question\": \"Why?\"}"]), dir.path());
        let vars = inputs::question_gen("t", "x", Overall::Empty, "r");
        let gw = Gateway::new(Arc::new(rec));
        let q = gw.complete(TemplateId::QuestionGen, &vars, &[], super::super::schema::question).unwrap();
        let replay = Gateway::new(Arc::new(Scripted::new(dir.path())));
        let q2 = replay.complete(TemplateId::QuestionGen, &vars, &[], super::super::schema::question).unwrap();
        assert_eq!((q.value, q.retries), (q2.value, q2.retries));
    }

    #[test]
    fn heuristic_links_on_shared_words() {
        let s = sents(&["The button is blue.", "I will make the button red.", "Now the header."]);
        let req_vars = inputs::sentence_link(&s, "");
        let req = Request {
            template: TemplateId::SentenceLink,
            variables: &req_vars,
            images: &[],
            prompt: "",
            attempt: 0,
            input_hash: "",
        };
        let raw = Heuristic.respond(&req).unwrap();
        assert_eq!(super::super::schema::sentence_groups(&raw, &s).unwrap(), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn heuristic_cue_table() {
        let grade = |t: &str| super::super::schema::evaluation(&evaluate(t)).unwrap().overall;
        assert_eq!(grade("Aligned it because the grid is eight pixels."), Overall::Strong);
        assert_eq!(grade("Following the usual convention here."), Overall::Strong);
        assert_eq!(grade("I like this color."), Overall::Weak);
        assert_eq!(grade("Moving the logo."), Overall::Empty);
    }
}
