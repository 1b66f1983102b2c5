//! Evaluation harness: segmentation ablation over a dataset directory and
//! rationale-grade accuracy.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use stepwise_core::metrics::{default_window, mean, MetricError, RationaleAccuracy};
use stepwise_core::{
    precision_recall_f1, score_rationale_accuracy, window_diff, AblationCondition, Overall,
    Segmentation, SessionEvent,
};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError};
use crate::pipeline::{Pipeline, PipelineConfig, Window};
use crate::session::SessionState;
use crate::store::{read_session_log, LogError};

pub const SESSION_FILE: &str = "session.jsonl";
pub const GOLD_FILE: &str = "gold.json";
pub const K_CONVENTION: &str = "k = max(2, round(N / (2 * (|ref| + 1)))), halves rounded up";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset {0}: {1}")]
    Layout(PathBuf, String),
    #[error("{path}: {source}")]
    Log { path: PathBuf, source: LogError },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLabel {
    pub step_id: String,
    #[serde(alias = "label")]
    pub overall: Overall,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gold {
    pub n_units: usize,
    pub boundaries: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_labels: Option<Vec<StepLabel>>,
}

impl Gold {
    pub fn segmentation(&self) -> Result<Segmentation, MetricError> {
        Segmentation::new(self.n_units, self.boundaries.iter().copied())
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSession {
    pub name: String,
    pub events: Vec<SessionEvent>,
    pub gold: Gold,
}

/// Every subdirectory holding both a session log and a gold file, by name.
/// Directories with only one of the two are a layout error.
pub fn load_dataset(dir: &Path) -> Result<Vec<DatasetSession>, EvalError> {
    let layout = |m: String| EvalError::Layout(dir.to_path_buf(), m);
    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| layout(e.to_string()))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    names.sort();
    let mut out = Vec::new();
    for path in names {
        let (log, gold) = (path.join(SESSION_FILE), path.join(GOLD_FILE));
        match (log.is_file(), gold.is_file()) {
            (false, false) => continue,
            (true, true) => {}
            _ => return Err(layout(format!("{} needs both {SESSION_FILE} and {GOLD_FILE}", path.display()))),
        }
        let events = read_session_log(&log).map_err(|source| EvalError::Log { path: log.clone(), source })?;
        let gold: Gold = serde_json::from_str(&fs::read_to_string(&gold)?)
            .map_err(|e| layout(format!("{}: {e}", gold.display())))?;
        gold.segmentation().map_err(|e| layout(format!("{}: {e}", path.display())))?;
        let n_sentences = events.iter().filter(|e| matches!(e, SessionEvent::Sentence(_))).count();
        if n_sentences != gold.n_units {
            return Err(layout(format!(
                "{}: gold n_units {} but log has {n_sentences} sentences",
                path.display(),
                gold.n_units
            )));
        }
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        out.push(DatasetSession { name, events, gold });
    }
    if out.is_empty() {
        return Err(layout("no sessions found".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScore {
    pub session: String,
    pub window_diff: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ref_boundaries: usize,
    pub hyp_boundaries: usize,
    pub hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skip {
    pub session: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pooled {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub condition: String,
    /// Per-recording means; `None` when every session was skipped.
    pub window_diff: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub skipped: usize,
    pub pooled: Option<Pooled>,
    pub sessions: Vec<SessionScore>,
    pub skips: Vec<Skip>,
}

/// Segment one session's whole log as a single window.
pub fn segment_session(
    pipeline: &Pipeline,
    name: &str,
    events: &[SessionEvent],
) -> Result<Vec<stepwise_core::CognitiveDecisionStep>, GatewayError> {
    let mut state = SessionState::new(name);
    state.ingest(events.to_vec()).expect("dataset logs are validated on load");
    let transcript = state.transcript();
    pipeline.segment(&Window {
        sentences: &state.sentences,
        actions: &state.actions,
        action_range: 0..state.actions.len(),
        transcript: &transcript,
        first_step: 0,
    })
}

fn score(session: &DatasetSession, steps: &[stepwise_core::CognitiveDecisionStep]) -> Result<SessionScore, MetricError> {
    let reference = session.gold.segmentation()?;
    let hypothesis = Segmentation::from_steps(session.gold.n_units, steps);
    let pr = precision_recall_f1(&reference, &hypothesis)?;
    let wd = window_diff(&reference, &hypothesis, None)?;
    Ok(SessionScore {
        session: session.name.clone(),
        window_diff: wd,
        precision: pr.precision,
        recall: pr.recall,
        f1: pr.f1,
        ref_boundaries: reference.boundaries().len(),
        hyp_boundaries: hypothesis.boundaries().len(),
        hits: reference.boundaries().intersection(hypothesis.boundaries()).count(),
    })
}

fn pooled(scores: &[SessionScore]) -> Option<Pooled> {
    if scores.is_empty() {
        return None;
    }
    let hits: usize = scores.iter().map(|s| s.hits).sum();
    let hyp: usize = scores.iter().map(|s| s.hyp_boundaries).sum();
    let refs: usize = scores.iter().map(|s| s.ref_boundaries).sum();
    let ratio = |d: usize, other_empty: bool| match d {
        0 if other_empty => 1.0,
        0 => 0.0,
        d => hits as f64 / d as f64,
    };
    let precision = ratio(hyp, refs == 0);
    let recall = ratio(refs, hyp == 0);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Some(Pooled { precision, recall, f1 })
}

/// One row per condition in the given order. Sessions the provider cannot
/// serve, or too short for the metric window, are skipped and counted.
pub fn run_ablation(
    gateway: &Gateway,
    base: &PipelineConfig,
    dataset: &[DatasetSession],
    conditions: &[AblationCondition],
) -> Vec<AblationRow> {
    conditions
        .iter()
        .map(|&condition| {
            let pipeline = Pipeline::new(gateway.clone(), PipelineConfig { condition, ..base.clone() });
            let mut sessions = Vec::new();
            let mut skips = Vec::new();
            for s in dataset {
                let result = segment_session(&pipeline, &s.name, &s.events)
                    .map_err(|e| e.to_string())
                    .and_then(|steps| score(s, &steps).map_err(|e| e.to_string()));
                match result {
                    Ok(sc) => sessions.push(sc),
                    Err(reason) => {
                        tracing::warn!(session = %s.name, %condition, "skipped: {reason}");
                        skips.push(Skip { session: s.name.clone(), reason });
                    }
                }
            }
            AblationRow {
                condition: condition.label(),
                window_diff: mean(sessions.iter().map(|s| s.window_diff)),
                precision: mean(sessions.iter().map(|s| s.precision)),
                recall: mean(sessions.iter().map(|s| s.recall)),
                f1: mean(sessions.iter().map(|s| s.f1)),
                skipped: skips.len(),
                pooled: pooled(&sessions),
                sessions,
                skips,
            }
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

pub fn write_ablation_csv(rows: &[AblationRow], out: impl std::io::Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["condition", "window_diff", "precision", "recall", "f1", "skipped"])?;
    for r in rows {
        w.write_record([
            r.condition.clone(),
            cell(r.window_diff),
            cell(r.precision),
            cell(r.recall),
            cell(r.f1),
            r.skipped.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Sidecar metadata: window convention, averaging, pooled scores and
/// per-session detail.
pub fn ablation_meta(rows: &[AblationRow], dataset: &[DatasetSession], provider: &Value) -> Value {
    let windows: BTreeMap<&str, usize> = dataset
        .iter()
        .filter_map(|s| Some((s.name.as_str(), default_window(&s.gold.segmentation().ok()?))))
        .collect();
    serde_json::json!({
        "k_convention": K_CONVENTION,
        "k_per_session": windows,
        "averaging": "csv columns are per-recording means; pooled holds micro-averaged precision/recall/f1",
        "provider": provider,
        "conditions": rows,
    })
}

/// Sidecar path for an output file: `<out>.meta.json`.
pub fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Step grades from any of: a list of `{step_id, overall|label}`, a gold
/// file with `step_labels`, or an exported documentation (entries that
/// carry an assessment).
pub fn read_labels(path: &Path) -> Result<Vec<(String, Overall)>, EvalError> {
    let bad = |m: String| EvalError::Input(format!("{}: {m}", path.display()));
    let v: Value = serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| bad(e.to_string()))?;
    let labels: Vec<StepLabel> = if let Some(steps) = v.get("steps").and_then(Value::as_array) {
        steps
            .iter()
            .filter_map(|e| {
                let step_id = e.get("step_id")?.as_str()?.to_string();
                let overall = e.pointer("/assessment/overall")?.as_str()?.parse().ok()?;
                Some(StepLabel { step_id, overall })
            })
            .collect()
    } else {
        let list = v.get("step_labels").unwrap_or(&v);
        serde_json::from_value(list.clone()).map_err(|e| bad(e.to_string()))?
    };
    Ok(labels.into_iter().map(|l| (l.step_id, l.overall)).collect())
}

pub fn eval_rationale(gold: &Path, predicted: &Path) -> Result<RationaleAccuracy, EvalError> {
    Ok(score_rationale_accuracy(&read_labels(gold)?, &read_labels(predicted)?)?)
}
