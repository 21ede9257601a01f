//! Execution of candidate chart scripts.
//!
//! Each task gets a fresh temporary [`Workspace`] holding its data files.
//! A script runs through an [`ExecBackend`]: a real interpreter child process
//! ([`ProcessBackend`]), the structured-result runner ([`ShimBackend`]) or a
//! scripted table for tests ([`FakeBackend`]).

mod classify;
mod fake;
mod process;
mod shim;

use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{is_safe_relative_path, ChartTask};
use crate::pipeline::ScriptSource;

pub use classify::{classify_error, error_histogram, ClassifyError, ErrorKind, ErrorSignature, HistogramEntry};
pub use fake::{synthetic_png, FakeBackend, FakeOutcome, FakeRule};
pub use process::{ProcessBackend, FORCED_OUTPUT_NAME, SCRIPT_FILE_NAME};
pub use shim::{parse_shim_stdout, ShimBackend, ShimResult, ShimStatus, SHIM_SENTINEL};

/// Prefix of the synthetic final line written for wall-clock timeouts.
pub const TIMEOUT_MARKER: &str = "ChartforgeTimeout";
/// Prefix of the synthetic final line for scripts that exit cleanly without a chart.
pub const NO_FIGURE_MARKER: &str = "ChartforgeNoFigure";
/// Prefix of the synthetic final line for interpreters killed by a signal.
pub const CRASH_MARKER: &str = "ChartforgeCrash";

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("workspace I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("data file `{0}` escapes the workspace")]
    UnsafePath(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkPolicy {
    Denied,
    Allowed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub wall_timeout_secs: u64,
    pub max_output_bytes: usize,
    pub network: NetworkPolicy,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            wall_timeout_secs: 60,
            max_output_bytes: 1 << 20,
            network: NetworkPolicy::Denied,
        }
    }
}

impl Limits {
    pub fn wall_timeout(&self) -> Duration {
        Duration::from_secs(self.wall_timeout_secs.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecStatus {
    Ok,
    Raised,
    Timeout,
    Crashed,
}

mod png_base64 {
    use base64::Engine as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(bytes) => s.serialize_some(&base64::engine::general_purpose::STANDARD.encode(bytes)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|text| {
                base64::engine::general_purpose::STANDARD
                    .decode(text)
                    .map_err(serde::de::Error::custom)
            })
            .transpose()
    }
}

/// Result of one script execution.
///
/// `Ok` always carries an image and `Raised` always carries a traceback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecStatus,
    pub traceback: Option<String>,
    #[serde(with = "png_base64", default)]
    pub image: Option<Vec<u8>>,
    pub duration_secs: f64,
}

impl ExecutionOutcome {
    pub fn ok(image: Vec<u8>, duration_secs: f64) -> Self {
        Self {
            status: ExecStatus::Ok,
            traceback: None,
            image: Some(image),
            duration_secs,
        }
    }

    pub fn raised(traceback: impl Into<String>, duration_secs: f64) -> Self {
        Self {
            status: ExecStatus::Raised,
            traceback: Some(traceback.into()),
            image: None,
            duration_secs,
        }
    }

    pub fn timeout(traceback: impl Into<String>, duration_secs: f64) -> Self {
        Self {
            status: ExecStatus::Timeout,
            traceback: Some(traceback.into()),
            image: None,
            duration_secs,
        }
    }

    pub fn crashed(traceback: impl Into<String>, duration_secs: f64) -> Self {
        Self {
            status: ExecStatus::Crashed,
            traceback: Some(traceback.into()),
            image: None,
            duration_secs,
        }
    }

    pub fn is_success(&self) -> bool {
        self.status == ExecStatus::Ok
    }

    /// Error text forwarded to the reflection step.
    pub fn error_text(&self) -> String {
        match (&self.traceback, self.status) {
            (Some(tb), _) if !tb.trim().is_empty() => tb.clone(),
            (_, status) => format!("{CRASH_MARKER}: execution ended with status {status:?}"),
        }
    }
}

/// Per-task scratch directory, deleted on drop.
#[derive(Debug)]
pub struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    pub fn empty() -> Result<Self, SandboxError> {
        Ok(Self {
            dir: tempfile::Builder::new().prefix("chartforge-").tempdir()?,
        })
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }
}

/// Creates a fresh workspace with every data file of `task` written under
/// its relative name.
pub fn prepare_workspace(task: &ChartTask) -> Result<Workspace, SandboxError> {
    let ws = Workspace::empty()?;
    for file in &task.data_files {
        if !is_safe_relative_path(&file.name) {
            return Err(SandboxError::UnsafePath(file.name.clone()));
        }
        let target = ws.path().join(&file.name);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&target, file.content.as_bytes())?;
    }
    Ok(ws)
}

/// Something that can run a script inside a workspace.
pub trait ExecBackend: Send + Sync {
    fn name(&self) -> &str;
    fn execute(
        &self,
        script: &ScriptSource,
        ws: &Workspace,
        limits: &Limits,
    ) -> Result<ExecutionOutcome, SandboxError>;
}

pub fn execute(
    script: &ScriptSource,
    ws: &Workspace,
    limits: &Limits,
    backend: &dyn ExecBackend,
) -> Result<ExecutionOutcome, SandboxError> {
    backend.execute(script, ws, limits)
}
