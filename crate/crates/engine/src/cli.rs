//! Command-line entry points.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use stepwise_core::{AblationCondition, GroupingVariant, SessionEvent};
use thiserror::Error;

use crate::eval;
use crate::gateway::responders::Recording;
use crate::gateway::{
    AuditLog, Gateway, ProviderConfig, ProviderMode, EVAL_TEMPERATURE, RUNTIME_TEMPERATURE,
};
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::service::{FileStorage, Service};
use crate::session::SessionState;
use crate::store::{check_snapshots, read_session_log, SnapshotStore};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_PROVIDER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "stepwise", version, about = "Structure recorded design sessions into documented decision steps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline over a session log and write documentation.
    Run(RunArgs),
    /// Score segmentation for each ablation condition over a dataset.
    EvalAblation(AblationArgs),
    /// Compare predicted step grades to gold grades.
    EvalRationale(RationaleArgs),
    /// Export documentation from saved steps or a service session directory.
    ExportDocs(ExportArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    #[arg(long, value_enum, env = "PROVIDER_MODE", default_value = "scripted")]
    pub provider_mode: ProviderMode,
    /// Fixture directory for scripted mode.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Sampling temperature in [0, 1].
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long, default_value_t = crate::gateway::DEFAULT_MAX_RETRIES)]
    pub max_retries: u32,
    /// JSON file with endpoint, model, temperature, api_key, max_retries.
    #[arg(long)]
    pub provider_config: Option<PathBuf>,
    /// Write every provider answer as a fixture under this directory.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Append the gateway audit log (JSON lines) to this file.
    #[arg(long)]
    pub audit: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Session log (JSON lines).
    pub log: PathBuf,
    /// Documentation output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Steps output path; defaults to the documentation path with a
    /// `.steps.json` extension.
    #[arg(long)]
    pub steps_out: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant, default_value = "v3")]
    pub variant: GroupingVariant,
    /// Ablation condition label; overrides --variant.
    #[arg(long)]
    pub condition: Option<AblationCondition>,
    /// Feed events one at a time through the real-time trigger instead of
    /// processing the log as one window.
    #[arg(long)]
    pub replay_triggers: bool,
    /// Session id used in question ids; defaults to the log file stem.
    #[arg(long)]
    pub session_id: Option<String>,
    /// Snapshot store; when given, every snapshot_ref must resolve in it.
    #[arg(long)]
    pub snapshots: Option<PathBuf>,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    /// Dataset directory: one subdirectory per session with session.jsonl
    /// and gold.json.
    pub dataset: PathBuf,
    /// Comma-separated condition labels, in output order.
    #[arg(long, value_delimiter = ',')]
    pub conditions: Option<Vec<String>>,
    /// CSV output path; metadata goes to `<out>.meta.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct RationaleArgs {
    pub gold: PathBuf,
    pub predicted: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Steps JSON from `run`, a saved session state, or a service session
    /// directory holding state.json.
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Session id for a bare steps file.
    #[arg(long, default_value = "session")]
    pub session_id: String,
    /// Export unfinished steps flagged incomplete instead of failing.
    #[arg(long)]
    pub partial: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long, value_parser = parse_variant, default_value = "v3")]
    pub variant: GroupingVariant,
    /// Snapshot store served at /snapshots; defaults to DATA_DIR/snapshots.
    #[arg(long)]
    pub snapshots: Option<PathBuf>,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

fn parse_variant(s: &str) -> Result<GroupingVariant, String> {
    let n = s.trim().trim_start_matches(['v', 'V']);
    n.parse::<u8>()
        .ok()
        .and_then(GroupingVariant::from_number)
        .ok_or_else(|| format!("unknown variant `{s}` (expected v1, v2 or v3)"))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Provider(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Provider(_) => EXIT_PROVIDER,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProviderFile {
    endpoint: Option<String>,
    model: Option<String>,
    api_key: Option<String>,
    temperature: Option<f64>,
    max_retries: Option<u32>,
}

/// Flags, then config file, then environment, then `default_temperature`.
pub fn provider_config(args: &ProviderArgs, default_temperature: f64) -> Result<ProviderConfig, CliError> {
    let file: ProviderFile = match &args.provider_config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).map_err(|e| input(format!("{}: {e}", p.display())))?)
            .map_err(|e| input(format!("{}: {e}", p.display())))?,
        None => ProviderFile::default(),
    };
    let temperature = args.temperature.or(file.temperature);
    let config = ProviderConfig {
        mode: args.provider_mode,
        endpoint: file.endpoint,
        model: file.model,
        api_key: file.api_key,
        temperature: temperature.unwrap_or(default_temperature),
        max_retries: file.max_retries.unwrap_or(args.max_retries),
        fixtures: args.fixtures.clone(),
    }
    .with_env(temperature.is_some())
    .map_err(input)?;
    config.validate().map_err(input)?;
    Ok(config)
}

pub fn build_gateway(
    args: &ProviderArgs,
    default_temperature: f64,
    snapshots: Option<SnapshotStore>,
) -> Result<Gateway, CliError> {
    let config = provider_config(args, default_temperature)?;
    let mut responder = config.responder(snapshots).map_err(input)?;
    if let Some(dir) = &args.record {
        responder = Arc::new(Recording::new(responder, dir.clone()));
    }
    let mut gateway = Gateway::new(responder).with_max_retries(config.max_retries);
    if let Some(path) = &args.audit {
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| input(format!("{}: {e}", path.display())))?;
        gateway = gateway.with_audit(Arc::new(AuditLog::with_sink(Box::new(file))));
    }
    Ok(gateway)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| input(format!("{}: {e}", parent.display())))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(input)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| input(format!("{}: {e}", path.display())))
}

/// Process a whole log through the pipeline. Returns the final state and
/// the provider failure that cut it short, if any.
pub fn run_session(
    pipeline: &Pipeline,
    session_id: &str,
    events: Vec<SessionEvent>,
    replay_triggers: bool,
) -> (SessionState, Option<String>) {
    let mut state = SessionState::new(session_id);
    let mut failure = None;
    if replay_triggers {
        for e in events {
            match state.append(pipeline, vec![e]) {
                Ok(report) => failure = report.provider_error.or(failure),
                Err(e) => unreachable!("log was validated on read: {e}"),
            }
        }
    } else if let Err(e) = state.ingest(events) {
        unreachable!("log was validated on read: {e}");
    }
    if let Err(e) = state.flush(pipeline) {
        failure = Some(e.to_string());
    }
    if !state.incomplete {
        failure = None;
    }
    (state, failure)
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let events = read_session_log(&args.log).map_err(|e| input(format!("{}: {e}", args.log.display())))?;
    let snapshots = args.snapshots.as_ref().map(SnapshotStore::new);
    if let Some(store) = &snapshots {
        check_snapshots(&events, store).map_err(|e| input(format!("{}: {e}", args.log.display())))?;
    }
    let gateway = build_gateway(&args.provider, RUNTIME_TEMPERATURE, snapshots)?;
    let condition = args.condition.unwrap_or(AblationCondition::full(args.variant));
    let pipeline = Pipeline::new(gateway, PipelineConfig { condition, ..PipelineConfig::default() });
    let session_id = args.session_id.clone().unwrap_or_else(|| {
        args.log.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "session".into())
    });

    let (state, failure) = run_session(&pipeline, &session_id, events, args.replay_triggers);
    write_json(&args.out, &state.documentation())?;
    let steps_out = args.steps_out.clone().unwrap_or_else(|| args.out.with_extension("steps.json"));
    write_json(&steps_out, &state.steps)?;
    match failure {
        Some(f) => Err(CliError::Provider(format!("provider failure; partial output written: {f}"))),
        None => Ok(()),
    }
}

pub fn cmd_eval_ablation(args: &AblationArgs) -> Result<(), CliError> {
    let conditions: Vec<AblationCondition> = match &args.conditions {
        None => AblationCondition::STANDARD.to_vec(),
        Some(labels) => labels
            .iter()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<AblationCondition>().map_err(input))
            .collect::<Result<_, _>>()?,
    };
    let dataset = eval::load_dataset(&args.dataset).map_err(input)?;
    let mut provider = args.provider.clone();
    if provider.provider_mode == ProviderMode::Scripted && provider.fixtures.is_none() {
        provider.fixtures = Some(args.dataset.join("fixtures"));
    }
    let config = provider_config(&provider, EVAL_TEMPERATURE)?;
    let gateway = build_gateway(&provider, EVAL_TEMPERATURE, None)?;
    let rows = eval::run_ablation(&gateway, &PipelineConfig::default(), &dataset, &conditions);

    let mut csv_bytes = Vec::new();
    eval::write_ablation_csv(&rows, &mut csv_bytes).map_err(input)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(input)?;
    }
    fs::write(&args.out, &csv_bytes).map_err(|e| input(format!("{}: {e}", args.out.display())))?;
    let provider_meta = serde_json::json!({
        "mode": config.mode,
        "temperature": config.temperature,
        "max_retries": config.max_retries,
    });
    write_json(&eval::meta_path(&args.out), &eval::ablation_meta(&rows, &dataset, &provider_meta))?;
    print!("{}", String::from_utf8_lossy(&csv_bytes));
    Ok(())
}

pub fn cmd_eval_rationale(args: &RationaleArgs) -> Result<(), CliError> {
    let acc = eval::eval_rationale(&args.gold, &args.predicted).map_err(input)?;
    println!("overall\t{:.4}\t({}/{})", acc.overall, acc.correct, acc.total);
    for (class, v) in &acc.per_class {
        match v {
            Some(a) => println!("{class}\t{a:.4}"),
            None => println!("{class}\t-"),
        }
    }
    if let Some(out) = &args.out {
        write_json(out, &acc)?;
    }
    Ok(())
}

pub fn cmd_export_docs(args: &ExportArgs) -> Result<(), CliError> {
    let path = if args.input.is_dir() { args.input.join(crate::service::STATE_SNAPSHOT) } else { args.input.clone() };
    let text = fs::read_to_string(&path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))?;
    let (session_id, steps): (String, Vec<stepwise_core::CognitiveDecisionStep>) = if value.is_array() {
        (args.session_id.clone(), serde_json::from_value(value).map_err(input)?)
    } else {
        let state: SessionState = serde_json::from_value(value).map_err(|e| input(format!("{}: {e}", path.display())))?;
        (state.session_id, state.steps)
    };
    let doc = match stepwise_core::export_documentation(&session_id, &steps) {
        Ok(doc) => doc,
        Err(e) if !args.partial => return Err(input(format!("{e}; rerun with --partial to export anyway"))),
        Err(_) => stepwise_core::docs::export_partial(&session_id, &steps, true),
    };
    write_json(&args.out, &doc)
}

pub fn cmd_serve(args: &ServeArgs) -> Result<(), CliError> {
    let snapshots = SnapshotStore::new(args.snapshots.clone().unwrap_or_else(|| args.data_dir.join("snapshots")));
    let gateway = build_gateway(&args.provider, RUNTIME_TEMPERATURE, Some(snapshots.clone()))?;
    let pipeline = Pipeline::new(
        gateway,
        PipelineConfig { condition: AblationCondition::full(args.variant), ..PipelineConfig::default() },
    );
    fs::create_dir_all(&args.data_dir).map_err(|e| input(format!("{}: {e}", args.data_dir.display())))?;
    let storage = Arc::new(FileStorage::new(&args.data_dir));
    let service = Service::open(storage, pipeline).map_err(input)?;
    tracing::info!("recovered {} sessions", service.session_ids().len());
    let router = crate::http::router(Arc::new(service), Some(snapshots));
    let runtime = tokio::runtime::Runtime::new().map_err(input)?;
    runtime
        .block_on(crate::http::serve(router, SocketAddr::new(args.host, args.port)))
        .map_err(input)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::EvalAblation(a) => cmd_eval_ablation(a),
        Command::EvalRationale(a) => cmd_eval_rationale(a),
        Command::ExportDocs(a) => cmd_export_docs(a),
        Command::Serve(a) => cmd_serve(a),
    }
}
