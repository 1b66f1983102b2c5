//! Session log IO and the content-addressed snapshot store.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use stepwise_core::{EventValidator, Rule, SessionEvent};
use thiserror::Error;

/// Line numbers are 1-based.
#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("line {line}: invariant violated: {rule}")]
    InvariantViolation { line: usize, rule: Rule },
    #[error("line {line}: snapshot `{reference}` not in the snapshot store")]
    UnresolvedSnapshot { line: usize, reference: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Read a JSON-lines session log. Blank lines are skipped but counted.
pub fn parse_session_log(reader: impl BufRead) -> Result<Vec<SessionEvent>, LogError> {
    let mut validator = EventValidator::new();
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: SessionEvent = serde_json::from_str(&line)
            .map_err(|e| LogError::MalformedRecord { line: line_no, message: e.to_string() })?;
        validator
            .check(&event)
            .map_err(|rule| LogError::InvariantViolation { line: line_no, rule })?;
        events.push(event);
    }
    Ok(events)
}

pub fn read_session_log(path: &Path) -> Result<Vec<SessionEvent>, LogError> {
    parse_session_log(io::BufReader::new(fs::File::open(path)?))
}

pub fn serialize_session_log(events: &[SessionEvent], mut out: impl Write) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Check that every `snapshot_ref` resolves in `store`. Positions are the
/// 1-based index among events, which matches the line number of a log
/// without blank lines.
pub fn check_snapshots(events: &[SessionEvent], store: &SnapshotStore) -> Result<(), LogError> {
    for (i, e) in events.iter().enumerate() {
        if let SessionEvent::Action(a) = e {
            if let Some(r) = &a.snapshot_ref {
                if store.resolve(r).is_none() {
                    return Err(LogError::UnresolvedSnapshot { line: i + 1, reference: r.clone() });
                }
            }
        }
    }
    Ok(())
}

const EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "webp", "gif"];

/// Snapshots stored as `<dir>/<sha256-hex>[.ext]`.
#[derive(Debug, Clone)]
pub struct SnapshotStore {
    dir: PathBuf,
}

impl SnapshotStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        SnapshotStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn reference(bytes: &[u8]) -> String {
        hex::encode(Sha256::digest(bytes))
    }

    /// Store `bytes` under their hash and return the reference.
    pub fn put(&self, bytes: &[u8], extension: &str) -> io::Result<String> {
        let reference = Self::reference(bytes);
        fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(format!("{reference}.{extension}"));
        if !path.exists() {
            fs::write(path, bytes)?;
        }
        Ok(reference)
    }

    /// The single file stored under `reference`, if any.
    pub fn resolve(&self, reference: &str) -> Option<PathBuf> {
        if reference.is_empty() || reference.contains(['/', '\\', '.']) {
            return None;
        }
        let bare = self.dir.join(reference);
        if bare.is_file() {
            return Some(bare);
        }
        EXTENSIONS
            .iter()
            .map(|ext| self.dir.join(format!("{reference}.{ext}")))
            .find(|p| p.is_file())
    }

    pub fn load(&self, reference: &str) -> io::Result<Vec<u8>> {
        let path = self.resolve(reference).ok_or_else(|| {
            io::Error::new(io::ErrorKind::NotFound, format!("snapshot {reference}"))
        })?;
        fs::read(path)
    }
}
