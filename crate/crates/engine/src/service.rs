//! Session lifecycle behind the HTTP layer.
//!
//! Each session has two append-only journals (event batches and responses)
//! sharing one sequence counter, plus a state snapshot rewritten after every
//! mutation. Journals are the source of truth: opening a data directory
//! replays them in sequence order through the pipeline.
//!
//! Writes to one session are serialized by a mutex and applied to a copy of
//! the state, which is committed only after the journal write succeeds.
//! Readers get the last published `Arc<SessionState>` without locking.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use stepwise_core::{CognitiveDecisionStep, Documentation, ResponseMode, Rule, SessionEvent, StepStatus, UserResponse};
use thiserror::Error;
use tokio::sync::watch;

use crate::pipeline::{Pipeline, ResponseFailure};
use crate::session::{QuestionView, SessionError, SessionState};

pub const POLL_TIMEOUT: Duration = Duration::from_secs(25);

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown question `{0}`")]
    UnknownQuestion(String),
    #[error("event {index} violates {rule}")]
    InvalidEvent { index: usize, rule: Rule },
    #[error("question already resolved")]
    AlreadyResolved,
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
}

impl From<SessionError> for ServiceError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::InvalidEvent { index, rule } => ServiceError::InvalidEvent { index, rule },
            SessionError::UnknownQuestion(q) => ServiceError::UnknownQuestion(q),
            SessionError::Response(ResponseFailure::AlreadyResolved) => ServiceError::AlreadyResolved,
            SessionError::Response(ResponseFailure::NoPendingExchange) => {
                ServiceError::InvalidResponse("step has no question".into())
            }
            SessionError::Response(ResponseFailure::Invalid(e)) => ServiceError::InvalidResponse(e.to_string()),
            SessionError::Response(ResponseFailure::Gateway(e)) => ServiceError::ProviderUnavailable(e.to_string()),
        }
    }
}

fn storage_failure(e: io::Error) -> ServiceError {
    ServiceError::StorageFailure(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JournalEntry {
    Events { seq: u64, events: Vec<SessionEvent> },
    Response { seq: u64, question_id: String, response: UserResponse },
}

impl JournalEntry {
    pub fn seq(&self) -> u64 {
        match self {
            JournalEntry::Events { seq, .. } | JournalEntry::Response { seq, .. } => *seq,
        }
    }
}

pub trait Storage: Send + Sync {
    fn create(&self, session_id: &str) -> io::Result<()>;
    fn append(&self, session_id: &str, entry: &JournalEntry) -> io::Result<()>;
    fn save_snapshot(&self, state: &SessionState) -> io::Result<()>;
    fn sessions(&self) -> io::Result<Vec<String>>;
    /// Both journals merged in sequence order.
    fn journal(&self, session_id: &str) -> io::Result<Vec<JournalEntry>>;
}

/// `<root>/sessions/<id>/{events.jsonl, responses.jsonl, state.json}`.
#[derive(Debug, Clone)]
pub struct FileStorage {
    root: PathBuf,
}

pub const EVENTS_JOURNAL: &str = "events.jsonl";
pub const RESPONSES_JOURNAL: &str = "responses.jsonl";
pub const STATE_SNAPSHOT: &str = "state.json";

impl FileStorage {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FileStorage { root: root.into() }
    }

    pub fn session_dir(&self, session_id: &str) -> PathBuf {
        self.root.join("sessions").join(session_id)
    }

    /// Reads a journal. A torn record at the tail, left by a crash mid-write,
    /// is cut off so later appends start on a clean line.
    fn read_lines(path: &Path, out: &mut Vec<JournalEntry>) -> io::Result<()> {
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(e),
        };
        let mut offset = 0;
        while offset < bytes.len() {
            let end = bytes[offset..].iter().position(|&b| b == b'\n').map(|i| offset + i);
            let line = &bytes[offset..end.unwrap_or(bytes.len())];
            if line.iter().all(u8::is_ascii_whitespace) {
                offset = end.map_or(bytes.len(), |e| e + 1);
                continue;
            }
            match serde_json::from_slice(line) {
                Ok(entry) => out.push(entry),
                Err(e) if end.is_none() && e.is_eof() => {
                    tracing::warn!("{}: dropping torn record", path.display());
                    OpenOptions::new().write(true).open(path)?.set_len(offset as u64)?;
                    return Ok(());
                }
                Err(e) => return Err(io::Error::new(io::ErrorKind::InvalidData, e)),
            }
            offset = end.map_or(bytes.len(), |e| e + 1);
        }
        Ok(())
    }
}

impl Storage for FileStorage {
    fn create(&self, session_id: &str) -> io::Result<()> {
        let dir = self.session_dir(session_id);
        fs::create_dir_all(&dir)?;
        for name in [EVENTS_JOURNAL, RESPONSES_JOURNAL] {
            OpenOptions::new().create(true).append(true).open(dir.join(name))?;
        }
        Ok(())
    }

    fn append(&self, session_id: &str, entry: &JournalEntry) -> io::Result<()> {
        let name = match entry {
            JournalEntry::Events { .. } => EVENTS_JOURNAL,
            JournalEntry::Response { .. } => RESPONSES_JOURNAL,
        };
        let mut line = serde_json::to_vec(entry)?;
        line.push(b'\n');
        let mut f = OpenOptions::new().append(true).open(self.session_dir(session_id).join(name))?;
        f.write_all(&line)?;
        f.sync_data()
    }

    fn save_snapshot(&self, state: &SessionState) -> io::Result<()> {
        let dir = self.session_dir(&state.session_id);
        let tmp = dir.join(format!("{STATE_SNAPSHOT}.tmp"));
        fs::write(&tmp, serde_json::to_vec_pretty(state)?)?;
        fs::rename(tmp, dir.join(STATE_SNAPSHOT))
    }

    fn sessions(&self) -> io::Result<Vec<String>> {
        let dir = self.root.join("sessions");
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut ids: Vec<String> = fs::read_dir(dir)?
            .filter_map(Result::ok)
            .filter(|e| e.path().is_dir())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        ids.sort();
        Ok(ids)
    }

    fn journal(&self, session_id: &str) -> io::Result<Vec<JournalEntry>> {
        let dir = self.session_dir(session_id);
        let mut out = Vec::new();
        Self::read_lines(&dir.join(EVENTS_JOURNAL), &mut out)?;
        Self::read_lines(&dir.join(RESPONSES_JOURNAL), &mut out)?;
        out.sort_by_key(JournalEntry::seq);
        Ok(out)
    }
}

/// In-process storage; `fail` turns every call into an error.
#[derive(Debug, Default)]
pub struct MemoryStorage {
    journals: Mutex<HashMap<String, Vec<JournalEntry>>>,
    snapshots: Mutex<HashMap<String, SessionState>>,
    fail: std::sync::atomic::AtomicBool,
}

impl MemoryStorage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn failing() -> Self {
        let s = Self::default();
        s.set_failing(true);
        s
    }

    pub fn set_failing(&self, fail: bool) {
        self.fail.store(fail, std::sync::atomic::Ordering::SeqCst);
    }

    fn check(&self) -> io::Result<()> {
        if self.fail.load(std::sync::atomic::Ordering::SeqCst) {
            Err(io::Error::other("storage unavailable"))
        } else {
            Ok(())
        }
    }

    pub fn snapshot(&self, session_id: &str) -> Option<SessionState> {
        self.snapshots.lock().unwrap_or_else(|p| p.into_inner()).get(session_id).cloned()
    }
}

impl Storage for MemoryStorage {
    fn create(&self, session_id: &str) -> io::Result<()> {
        self.check()?;
        self.journals.lock().unwrap_or_else(|p| p.into_inner()).entry(session_id.into()).or_default();
        Ok(())
    }

    fn append(&self, session_id: &str, entry: &JournalEntry) -> io::Result<()> {
        self.check()?;
        self.journals
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .get_mut(session_id)
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, session_id.to_string()))?
            .push(entry.clone());
        Ok(())
    }

    fn save_snapshot(&self, state: &SessionState) -> io::Result<()> {
        self.check()?;
        self.snapshots.lock().unwrap_or_else(|p| p.into_inner()).insert(state.session_id.clone(), state.clone());
        Ok(())
    }

    fn sessions(&self) -> io::Result<Vec<String>> {
        self.check()?;
        let mut ids: Vec<String> = self.journals.lock().unwrap_or_else(|p| p.into_inner()).keys().cloned().collect();
        ids.sort();
        Ok(ids)
    }

    fn journal(&self, session_id: &str) -> io::Result<Vec<JournalEntry>> {
        self.check()?;
        let mut j = self.journals.lock().unwrap_or_else(|p| p.into_inner()).get(session_id).cloned().unwrap_or_default();
        j.sort_by_key(JournalEntry::seq);
        Ok(j)
    }
}

struct Writer {
    state: SessionState,
    next_seq: u64,
}

struct SessionHandle {
    writer: Mutex<Writer>,
    published: watch::Sender<Arc<SessionState>>,
}

impl SessionHandle {
    fn new(state: SessionState, next_seq: u64) -> Self {
        let (tx, _) = watch::channel(Arc::new(state.clone()));
        SessionHandle { writer: Mutex::new(Writer { state, next_seq }), published: tx }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendResult {
    pub accepted: usize,
    pub revision: u64,
    pub windows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseResult {
    pub question_id: String,
    pub step_id: String,
    pub status: StepStatus,
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionsPage {
    pub revision: u64,
    pub questions: Vec<QuestionView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepsPage {
    pub revision: u64,
    pub steps: Vec<CognitiveDecisionStep>,
}

/// Body of a response submission; the service stamps the time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseBody {
    pub mode: ResponseMode,
    #[serde(default)]
    pub answer_text: Option<String>,
}

pub struct Service {
    storage: Arc<dyn Storage>,
    pipeline: Pipeline,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
    poll_timeout: Duration,
}

impl Service {
    /// Open `storage`, replaying every stored session.
    pub fn open(storage: Arc<dyn Storage>, pipeline: Pipeline) -> Result<Self, ServiceError> {
        let mut sessions = HashMap::new();
        for id in storage.sessions().map_err(storage_failure)? {
            let journal = storage.journal(&id).map_err(storage_failure)?;
            let (state, next_seq) = replay(&pipeline, &id, &journal);
            sessions.insert(id, Arc::new(SessionHandle::new(state, next_seq)));
        }
        Ok(Service { storage, pipeline, sessions: RwLock::new(sessions), poll_timeout: POLL_TIMEOUT })
    }

    pub fn with_poll_timeout(mut self, timeout: Duration) -> Self {
        self.poll_timeout = timeout;
        self
    }

    pub fn poll_timeout(&self) -> Duration {
        self.poll_timeout
    }

    fn handle(&self, id: &str) -> Result<Arc<SessionHandle>, ServiceError> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().unwrap_or_else(|p| p.into_inner()).keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn create_session(&self) -> Result<String, ServiceError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        self.storage.create(&id).map_err(storage_failure)?;
        let state = SessionState::new(&id);
        if let Err(e) = self.storage.save_snapshot(&state) {
            tracing::warn!("snapshot for {id}: {e}");
        }
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id.clone(), Arc::new(SessionHandle::new(state, 0)));
        Ok(id)
    }

    /// Apply `f` to a copy of the state; journal `entry(seq)` and publish
    /// only if it succeeds and reports a change.
    fn mutate<T>(
        &self,
        handle: &SessionHandle,
        f: impl FnOnce(&mut SessionState) -> Result<(T, bool), ServiceError>,
        entry: impl FnOnce(u64) -> JournalEntry,
    ) -> Result<(T, Arc<SessionState>), ServiceError> {
        let mut w = handle.writer.lock().unwrap_or_else(|p| p.into_inner());
        let mut next = w.state.clone();
        let (out, changed) = f(&mut next)?;
        if changed {
            let e = entry(w.next_seq);
            self.storage.append(&next.session_id, &e).map_err(storage_failure)?;
            w.next_seq += 1;
            w.state = next;
            if let Err(e) = self.storage.save_snapshot(&w.state) {
                tracing::warn!("snapshot for {}: {e}", w.state.session_id);
            }
            handle.published.send_replace(Arc::new(w.state.clone()));
        }
        Ok((out, handle.published.borrow().clone()))
    }

    pub fn append_events(&self, session_id: &str, events: Vec<SessionEvent>) -> Result<AppendResult, ServiceError> {
        let handle = self.handle(session_id)?;
        if events.is_empty() {
            let rev = handle.published.borrow().revision;
            return Ok(AppendResult { accepted: 0, revision: rev, windows: 0, provider_error: None });
        }
        let journaled = events.clone();
        let (report, state) = self.mutate(
            &handle,
            |s| Ok((s.append(&self.pipeline, events)?, true)),
            |seq| JournalEntry::Events { seq, events: journaled },
        )?;
        Ok(AppendResult {
            accepted: report.accepted,
            revision: state.revision,
            windows: report.windows,
            provider_error: report.provider_error,
        })
    }

    fn session_of(question_id: &str) -> Option<&str> {
        question_id.rsplit_once('.').map(|(s, _)| s)
    }

    pub fn submit_response(&self, question_id: &str, body: ResponseBody) -> Result<ResponseResult, ServiceError> {
        let unknown = || ServiceError::UnknownQuestion(question_id.to_string());
        let session_id = Self::session_of(question_id).ok_or_else(unknown)?;
        let handle = self.handle(session_id).map_err(|_| unknown())?;
        let response = UserResponse {
            mode: body.mode,
            answer_text: body.answer_text,
            at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        let journaled = response.clone();
        let qid = question_id.to_string();
        let ((), state) = self.mutate(
            &handle,
            |s| Ok(((), s.respond(&self.pipeline, question_id, response)?)),
            |seq| JournalEntry::Response { seq, question_id: qid, response: journaled },
        )?;
        let i = state.step_for_question(question_id).ok_or_else(unknown)?;
        let step = &state.steps[i];
        Ok(ResponseResult {
            question_id: question_id.to_string(),
            step_id: step.step_id.clone(),
            status: step.status,
            revision: state.revision,
        })
    }

    pub fn state(&self, session_id: &str) -> Result<Arc<SessionState>, ServiceError> {
        Ok(self.handle(session_id)?.published.borrow().clone())
    }

    pub fn steps(&self, session_id: &str) -> Result<StepsPage, ServiceError> {
        let s = self.state(session_id)?;
        Ok(StepsPage { revision: s.revision, steps: s.steps.clone() })
    }

    pub fn documentation(&self, session_id: &str) -> Result<Documentation, ServiceError> {
        Ok(self.state(session_id)?.documentation())
    }

    /// Questions raised after `since`. Waits up to `timeout` for the
    /// revision to move past `since` when there is nothing new yet.
    pub async fn poll_questions(&self, session_id: &str, since: u64, timeout: Duration) -> Result<QuestionsPage, ServiceError> {
        let mut rx = self.handle(session_id)?.published.subscribe();
        let page = |s: &SessionState| QuestionsPage { revision: s.revision, questions: s.questions_since(since) };
        let first = page(&rx.borrow_and_update());
        if !first.questions.is_empty() || first.revision > since {
            return Ok(first);
        }
        let waited = tokio::time::timeout(timeout, rx.wait_for(|s| s.revision > since))
            .await
            .ok()
            .and_then(Result::ok)
            .map(|s| s.clone());
        let state = waited.unwrap_or_else(|| rx.borrow().clone());
        Ok(page(&state))
    }
}

/// Rebuild a session from its journal. Returns the state and the next
/// sequence number.
pub fn replay(pipeline: &Pipeline, session_id: &str, journal: &[JournalEntry]) -> (SessionState, u64) {
    let mut state = SessionState::new(session_id);
    let mut next_seq = 0;
    for entry in journal {
        next_seq = entry.seq() + 1;
        let result = match entry {
            JournalEntry::Events { events, .. } => state.append(pipeline, events.clone()).map(|_| ()),
            JournalEntry::Response { question_id, response, .. } => {
                state.respond(pipeline, question_id, response.clone()).map(|_| ())
            }
        };
        if let Err(e) = result {
            tracing::warn!(session = session_id, seq = entry.seq(), "journal entry no longer applies: {e}");
        }
    }
    (state, next_seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::responders::Heuristic;
    use crate::gateway::Gateway;
    use crate::pipeline::PipelineConfig;
    use stepwise_core::{Action, ActionType};

    fn pipeline() -> Pipeline {
        Pipeline::new(Gateway::new(Arc::new(Heuristic)), PipelineConfig::default())
    }

    fn action(ts: f64) -> SessionEvent {
        SessionEvent::Action(Action {
            ts,
            element_id: "e".into(),
            element_name: "Box".into(),
            action_type: ActionType::Move,
            property: None,
            old_value: None,
            new_value: None,
            bbox: None,
            snapshot_ref: None,
        })
    }

    #[test]
    fn create_gives_distinct_empty_sessions() {
        let svc = Service::open(Arc::new(MemoryStorage::new()), pipeline()).unwrap();
        let a = svc.create_session().unwrap();
        let b = svc.create_session().unwrap();
        assert_ne!(a, b);
        assert_eq!(svc.state(&a).unwrap().revision, 0);
        assert!(svc.documentation(&a).unwrap().steps.is_empty());
    }

    #[test]
    fn storage_down_is_storage_failure() {
        let mem = Arc::new(MemoryStorage::new());
        let svc = Service::open(mem.clone(), pipeline()).unwrap();
        let id = svc.create_session().unwrap();
        mem.set_failing(true);
        assert!(matches!(svc.create_session(), Err(ServiceError::StorageFailure(_))));
        assert!(matches!(svc.append_events(&id, vec![action(1.0)]), Err(ServiceError::StorageFailure(_))));
        assert_eq!(svc.state(&id).unwrap().revision, 0);
    }

    #[test]
    fn append_paths() {
        let svc = Service::open(Arc::new(MemoryStorage::new()), pipeline()).unwrap();
        let id = svc.create_session().unwrap();
        let r = svc.append_events(&id, vec![]).unwrap();
        assert_eq!((r.accepted, r.windows, r.revision), (0, 0, 0));
        let batch: Vec<SessionEvent> = (0..21).map(|i| action(i as f64 * 0.1)).collect();
        let r = svc.append_events(&id, batch).unwrap();
        assert_eq!((r.accepted, r.windows), (21, 1));
        assert!(matches!(
            svc.append_events(&id, vec![action(0.0)]),
            Err(ServiceError::InvalidEvent { index: 0, rule: Rule::TimestampOrder })
        ));
        assert!(matches!(svc.append_events("nope", vec![]), Err(ServiceError::UnknownSession(_))));
    }

    #[test]
    fn journal_merges_by_seq_and_replays() {
        let dir = tempfile::tempdir().unwrap();
        let fs_store = FileStorage::new(dir.path());
        fs_store.create("s").unwrap();
        let resp = UserResponse { mode: ResponseMode::Rejected, answer_text: None, at: "t".into() };
        fs_store.append("s", &JournalEntry::Events { seq: 0, events: vec![action(1.0)] }).unwrap();
        fs_store.append("s", &JournalEntry::Response { seq: 1, question_id: "s.s0".into(), response: resp }).unwrap();
        fs_store.append("s", &JournalEntry::Events { seq: 2, events: vec![action(2.0)] }).unwrap();
        let j = fs_store.journal("s").unwrap();
        assert_eq!(j.iter().map(JournalEntry::seq).collect::<Vec<_>>(), vec![0, 1, 2]);
        let (state, next) = replay(&pipeline(), "s", &j);
        assert_eq!(next, 3);
        assert_eq!(state.actions.len(), 2);
    }

    #[tokio::test]
    async fn poll_times_out_empty_at_current_revision() {
        let svc = Service::open(Arc::new(MemoryStorage::new()), pipeline()).unwrap();
        let id = svc.create_session().unwrap();
        let page = svc.poll_questions(&id, 0, Duration::from_millis(50)).await.unwrap();
        assert_eq!(page.revision, 0);
        assert!(page.questions.is_empty());
    }
}
