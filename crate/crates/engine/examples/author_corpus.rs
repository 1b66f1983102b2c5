//! Regenerates the bundled test corpus from the authored scenarios.
//!
//!     cargo run -p stepwise --example author_corpus
//!
//! Writes, under `tests/data/`:
//! - `golden/`: session log, gold file, snapshots, scripted fixtures and the
//!   expected documentation for the batch run;
//! - `ablation/`: one directory per scenario plus shared fixtures covering
//!   every ablation condition.
//!
//! Fixtures are recorded from `ScenarioResponder`, then the golden run is
//! replayed from the fixtures alone and must reproduce the same bytes.

use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use stepwise::cli::run_session;
use stepwise::eval::{self, DatasetSession};
use stepwise::gateway::responders::{Recording, Scripted};
use stepwise::gateway::Gateway;
use stepwise::pipeline::{Pipeline, PipelineConfig};
use stepwise::scenario::{Scenario, ScenarioResponder};
use stepwise::store::{serialize_session_log, SnapshotStore};
use stepwise_core::{AblationCondition, Action, ResponseMode, UserResponse};

const CANVAS: (u32, u32) = (144, 150);
const SCALE: f64 = 10.0;

/// Answers given to the golden session's questions when recording the
/// response fixtures, by step id.
const GOLDEN_ANSWERS: [(&str, ResponseMode, Option<&str>); 2] = [
    (
        "s2",
        ResponseMode::Answered,
        Some("The orange matches the bakery's warm brand colors and stands out against the cream hero, so the order button is the first thing people notice."),
    ),
    ("s4", ResponseMode::Accepted, None),
];

type Result<T> = std::result::Result<T, Box<dyn Error>>;

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

fn load_scenarios(dir: &Path) -> Result<Vec<Scenario>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    paths
        .iter()
        .map(|p| Ok(serde_json::from_str(&fs::read_to_string(p)?).map_err(|e| format!("{}: {e}", p.display()))?))
        .collect()
}

/// Grey canvas with the edited element's box drawn dark.
fn snapshot_png(action: &Action) -> Result<Vec<u8>> {
    let (w, h) = CANVAS;
    let mut pixels = vec![0xE8u8; (w * h) as usize];
    if let Some(b) = action.bbox {
        let x0 = (b.x() / SCALE) as u32;
        let y0 = (b.y() / SCALE) as u32;
        let x1 = ((b.x() + b.w()) / SCALE).ceil() as u32;
        let y1 = ((b.y() + b.h()) / SCALE).ceil() as u32;
        for y in y0.min(h)..y1.min(h) {
            for x in x0.min(w)..x1.min(w) {
                pixels[(y * w + x) as usize] = 0x40;
            }
        }
    }
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, w, h);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.write_header()?.write_image_data(&pixels)?;
    Ok(out)
}

fn write_session(dir: &Path, scenario: &Scenario, snapshots: Option<&SnapshotStore>) -> Result<Vec<stepwise_core::SessionEvent>> {
    fs::create_dir_all(dir)?;
    let mut failure = None;
    let timeline = scenario.timeline(|_, action| {
        let store = snapshots?;
        match snapshot_png(action).and_then(|bytes| Ok(store.put(&bytes, "png")?)) {
            Ok(r) => Some(r),
            Err(e) => {
                failure = Some(e.to_string());
                None
            }
        }
    });
    if let Some(e) = failure {
        return Err(e.into());
    }
    let mut log = Vec::new();
    serialize_session_log(&timeline.events, &mut log)?;
    fs::write(dir.join(eval::SESSION_FILE), log)?;
    write_json(&dir.join(eval::GOLD_FILE), &scenario.gold())?;
    Ok(timeline.events)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn reset(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn author_golden(root: &Path, scenario: &Scenario, oracle: &Arc<ScenarioResponder>) -> Result<()> {
    let dir = root.join("golden");
    reset(&dir)?;
    let snapshots = SnapshotStore::new(dir.join("snapshots"));
    let events = write_session(&dir, scenario, Some(&snapshots))?;
    let fixtures = dir.join("fixtures");

    let recording = Gateway::new(Arc::new(Recording::new(Arc::clone(oracle), fixtures.clone())));
    let pipeline = Pipeline::new(recording, PipelineConfig::default());
    let (mut state, failure) = run_session(&pipeline, &scenario.session_id, events.clone(), false);
    if let Some(f) = failure {
        return Err(format!("oracle run failed: {f}").into());
    }
    let documentation = state.documentation();
    write_json(&dir.join("documentation.json"), &documentation)?;

    // Fixtures for answering the questions and for trigger-driven replay,
    // so the service can run on this session with the scripted provider.
    let mut recorded = Vec::new();
    for (step, mode, answer) in GOLDEN_ANSWERS {
        let qid = format!("{}.{step}", scenario.session_id);
        let response = UserResponse { mode, answer_text: answer.map(str::to_string), at: "recorded".into() };
        state.respond(&pipeline, &qid, response).map_err(|e| format!("{qid}: {e}"))?;
        recorded.push(serde_json::json!({"step_id": step, "mode": mode, "answer_text": answer}));
    }
    write_json(&dir.join("responses.json"), &recorded)?;
    write_json(&dir.join("answered.documentation.json"), &state.documentation())?;
    let (_, failure) = run_session(&pipeline, &scenario.session_id, events.clone(), true);
    if let Some(f) = failure {
        return Err(format!("oracle replay failed: {f}").into());
    }

    let scripted = Pipeline::new(Gateway::new(Arc::new(Scripted::new(fixtures))), PipelineConfig::default());
    let (replayed, failure) = run_session(&scripted, &scenario.session_id, events, false);
    if failure.is_some() || replayed.documentation() != documentation {
        return Err("scripted replay does not reproduce the oracle run".into());
    }
    println!(
        "golden: {} sentences, {} actions, {} steps, {} questions",
        scenario.sentence_count(),
        scenario.action_count(),
        documentation.steps.len(),
        documentation.steps.iter().filter(|s| s.qa.is_some()).count()
    );
    Ok(())
}

fn author_ablation(root: &Path, scenarios: &[Scenario], oracle: &Arc<ScenarioResponder>) -> Result<()> {
    let dir = root.join("ablation");
    reset(&dir)?;
    let mut dataset = Vec::new();
    for sc in scenarios {
        let events = write_session(&dir.join(&sc.session_id), sc, None)?;
        dataset.push(DatasetSession { name: sc.session_id.clone(), events, gold: sc.gold() });
    }
    let recording = Gateway::new(Arc::new(Recording::new(Arc::clone(oracle), dir.join("fixtures"))));
    let rows = eval::run_ablation(&recording, &PipelineConfig::default(), &dataset, &AblationCondition::STANDARD);
    if let Some(row) = rows.iter().find(|r| !r.skips.is_empty()) {
        return Err(format!("{} skipped sessions: {:?}", row.condition, row.skips).into());
    }
    let mut csv = Vec::new();
    eval::write_ablation_csv(&rows, &mut csv)?;
    print!("{}", String::from_utf8(csv)?);
    Ok(())
}

fn main() -> Result<()> {
    let root = data_dir();
    let golden: Scenario = serde_json::from_str(&fs::read_to_string(root.join("scenarios").join("golden.json"))?)?;
    let mut ablation = load_scenarios(&root.join("scenarios").join("ablation"))?;
    ablation.push(golden.clone());
    let oracle = Arc::new(ScenarioResponder::new(ablation.clone())?);
    author_golden(&root, &golden, &oracle)?;
    author_ablation(&root, &ablation, &oracle)?;
    Ok(())
}
