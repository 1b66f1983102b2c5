//! Every model call goes through [`Gateway::complete`]: render the template,
//! ask a [`Responder`], parse against the template's schema, retry with a
//! repair instruction on malformed output, and append to the audit log.

pub mod inputs;
pub mod responders;
pub mod schema;
pub mod template;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::store::SnapshotStore;
pub use template::{render_prompt, RenderError, TemplateId, Variables};

pub const REPAIR_INSTRUCTION: &str =
    "Your previous output was not valid JSON matching the schema; output only the JSON.";
pub const DEFAULT_MAX_RETRIES: u32 = 2;
/// Most recent snapshots attached to one call.
pub const IMAGE_CAP: usize = 4;
pub const RUNTIME_TEMPERATURE: f64 = 0.3;
pub const EVAL_TEMPERATURE: f64 = 0.0;

/// One attempt at a templated call.
#[derive(Debug)]
pub struct Request<'a> {
    pub template: TemplateId,
    pub variables: &'a Variables,
    /// Snapshot refs, oldest first, already capped.
    pub images: &'a [String],
    pub prompt: &'a str,
    /// 0 for the first try, then one per repair retry.
    pub attempt: u32,
    pub input_hash: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct ProviderError(pub String);

pub trait Responder: Send + Sync {
    fn respond(&self, request: &Request<'_>) -> Result<String, ProviderError>;
}

impl<R: Responder + ?Sized> Responder for Arc<R> {
    fn respond(&self, request: &Request<'_>) -> Result<String, ProviderError> {
        (**self).respond(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("provider unavailable for {template}: {message}")]
    ProviderUnavailable { template: TemplateId, message: String },
    #[error("{template} output violated its schema after {attempts} attempts: {message}")]
    SchemaViolation { template: TemplateId, attempts: u32, message: String },
    #[error(transparent)]
    Render(#[from] RenderError),
}

#[derive(Debug, Clone)]
pub struct Completion<T> {
    pub value: T,
    pub raw: String,
    pub retries: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    SchemaViolation,
    ProviderUnavailable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub template_id: TemplateId,
    pub input_hash: String,
    pub retries: u32,
    pub outcome: Outcome,
}

/// Append-only record of gateway calls, optionally mirrored to a JSONL sink.
#[derive(Default)]
pub struct AuditLog {
    entries: Mutex<Vec<AuditEntry>>,
    sink: Option<Mutex<Box<dyn Write + Send>>>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_sink(sink: Box<dyn Write + Send>) -> Self {
        AuditLog { entries: Mutex::default(), sink: Some(Mutex::new(sink)) }
    }

    fn record(&self, entry: AuditEntry) {
        if let Some(sink) = &self.sink {
            let mut w = sink.lock().unwrap_or_else(|p| p.into_inner());
            if let Ok(line) = serde_json::to_string(&entry) {
                if let Err(e) = writeln!(w, "{line}") {
                    tracing::warn!("audit sink write failed: {e}");
                }
            }
        }
        self.entries.lock().unwrap_or_else(|p| p.into_inner()).push(entry);
    }

    pub fn entries(&self) -> Vec<AuditEntry> {
        self.entries.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }
}

impl fmt::Debug for AuditLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AuditLog").field("entries", &self.entries().len()).finish()
    }
}

/// SHA-256 over the canonical JSON of template id, variables and image refs.
pub fn input_hash(template: TemplateId, variables: &Variables, images: &[String]) -> String {
    let canonical = json!({
        "images": images,
        "template": template.as_str(),
        "variables": variables,
    });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

#[derive(Clone)]
pub struct Gateway {
    responder: Arc<dyn Responder>,
    max_retries: u32,
    audit: Arc<AuditLog>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway").field("max_retries", &self.max_retries).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(responder: Arc<dyn Responder>) -> Self {
        Gateway { responder, max_retries: DEFAULT_MAX_RETRIES, audit: Arc::new(AuditLog::new()) }
    }

    pub fn with_max_retries(mut self, max_retries: u32) -> Self {
        self.max_retries = max_retries;
        self
    }

    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = audit;
        self
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    /// Render, ask, parse. Images are ignored for templates that take none
    /// and capped to the [`IMAGE_CAP`] most recent otherwise.
    pub fn complete<T>(
        &self,
        template: TemplateId,
        variables: &Variables,
        images: &[String],
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Completion<T>, GatewayError> {
        let prompt = render_prompt(template, variables)?;
        let images: &[String] = if template.expects_images() {
            &images[images.len().saturating_sub(IMAGE_CAP)..]
        } else {
            &[]
        };
        let hash = input_hash(template, variables, images);
        let repaired = format!("{prompt}\n\n{REPAIR_INSTRUCTION}");

        let mut last_error = String::new();
        for attempt in 0..=self.max_retries {
            let request = Request {
                template,
                variables,
                images,
                prompt: if attempt == 0 { &prompt } else { &repaired },
                attempt,
                input_hash: &hash,
            };
            let raw = match self.responder.respond(&request) {
                Ok(raw) => raw,
                Err(ProviderError(message)) => {
                    self.audit.record(AuditEntry {
                        template_id: template,
                        input_hash: hash.clone(),
                        retries: attempt,
                        outcome: Outcome::ProviderUnavailable,
                    });
                    return Err(GatewayError::ProviderUnavailable { template, message });
                }
            };
            match parse(&raw) {
                Ok(value) => {
                    self.audit.record(AuditEntry {
                        template_id: template,
                        input_hash: hash,
                        retries: attempt,
                        outcome: Outcome::Ok,
                    });
                    return Ok(Completion { value, raw, retries: attempt });
                }
                Err(e) => {
                    tracing::debug!(%template, attempt, "schema violation: {e}");
                    last_error = e;
                }
            }
        }
        self.audit.record(AuditEntry {
            template_id: template,
            input_hash: hash,
            retries: self.max_retries,
            outcome: Outcome::SchemaViolation,
        });
        Err(GatewayError::SchemaViolation {
            template,
            attempts: self.max_retries + 1,
            message: last_error,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Live,
    Scripted,
    Heuristic,
}

impl FromStr for ProviderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(ProviderMode::Live),
            "scripted" => Ok(ProviderMode::Scripted),
            "heuristic" => Ok(ProviderMode::Heuristic),
            _ => Err(format!("unknown provider mode `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("temperature {0} outside [0, 1]")]
    Temperature(f64),
    #[error("scripted mode needs a fixture directory")]
    MissingFixtures,
    #[error("live mode needs {0}")]
    MissingLiveSetting(&'static str),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_retries: u32,
    pub fixtures: Option<PathBuf>,
}

impl ProviderConfig {
    pub fn scripted(fixtures: impl Into<PathBuf>) -> Self {
        ProviderConfig {
            mode: ProviderMode::Scripted,
            endpoint: None,
            model: None,
            api_key: None,
            temperature: RUNTIME_TEMPERATURE,
            max_retries: DEFAULT_MAX_RETRIES,
            fixtures: Some(fixtures.into()),
        }
    }

    pub fn heuristic() -> Self {
        ProviderConfig { mode: ProviderMode::Heuristic, fixtures: None, ..Self::scripted("") }
    }

    /// Fill unset live settings from `PROVIDER_ENDPOINT`, `PROVIDER_MODEL`,
    /// `PROVIDER_API_KEY`, and the temperature from `PROVIDER_TEMPERATURE`
    /// when `temperature_set` is false.
    pub fn with_env(mut self, temperature_set: bool) -> Result<Self, ConfigError> {
        let env = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        self.endpoint = self.endpoint.or_else(|| env("PROVIDER_ENDPOINT"));
        self.model = self.model.or_else(|| env("PROVIDER_MODEL"));
        self.api_key = self.api_key.or_else(|| env("PROVIDER_API_KEY"));
        if !temperature_set {
            if let Some(t) = env("PROVIDER_TEMPERATURE") {
                self.temperature = t
                    .parse()
                    .map_err(|_| ConfigError::Invalid(format!("PROVIDER_TEMPERATURE `{t}`")))?;
            }
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(ConfigError::Temperature(self.temperature));
        }
        match self.mode {
            ProviderMode::Scripted if self.fixtures.is_none() => Err(ConfigError::MissingFixtures),
            ProviderMode::Live if self.endpoint.is_none() => {
                Err(ConfigError::MissingLiveSetting("an endpoint (PROVIDER_ENDPOINT)"))
            }
            ProviderMode::Live if self.model.is_none() => {
                Err(ConfigError::MissingLiveSetting("a model (PROVIDER_MODEL)"))
            }
            _ => Ok(()),
        }
    }

    pub fn responder(&self, snapshots: Option<SnapshotStore>) -> Result<Arc<dyn Responder>, ConfigError> {
        self.validate()?;
        Ok(match self.mode {
            ProviderMode::Scripted => Arc::new(responders::Scripted::new(
                self.fixtures.clone().ok_or(ConfigError::MissingFixtures)?,
            )),
            ProviderMode::Heuristic => Arc::new(responders::Heuristic),
            ProviderMode::Live => Arc::new(responders::Live::new(
                self.endpoint.clone().unwrap_or_default(),
                self.model.clone().unwrap_or_default(),
                self.api_key.clone(),
                self.temperature,
                snapshots,
            )),
        })
    }

    pub fn build(&self, snapshots: Option<SnapshotStore>) -> Result<Gateway, ConfigError> {
        Ok(Gateway::new(self.responder(snapshots)?).with_max_retries(self.max_retries))
    }
}
