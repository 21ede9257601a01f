//! Client side of the structured-result runner.
//!
//! The runner executes a script and prints exactly one line starting with
//! [`SHIM_SENTINEL`] followed by a JSON record. Everything else on stdout is
//! the script's own output and is ignored.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::process::{configure_env, run_child, signal_traceback, snapshot_pngs, timeout_traceback};
use super::{ExecBackend, ExecutionOutcome, Limits, SandboxError, Workspace, CRASH_MARKER, NO_FIGURE_MARKER, SCRIPT_FILE_NAME};
use crate::pipeline::ScriptSource;

pub const SHIM_SENTINEL: &str = "CHARTFORGE_RESULT:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShimStatus {
    #[serde(rename = "ok")]
    Ok,
    #[serde(rename = "raised")]
    Raised,
    #[serde(rename = "timeout-internal")]
    TimeoutInternal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShimResult {
    pub status: ShimStatus,
    #[serde(default)]
    pub traceback: String,
    #[serde(default)]
    pub images: Vec<String>,
    #[serde(default)]
    pub duration_ms: u64,
}

/// Extracts the result record. Exactly one sentinel line must be present.
pub fn parse_shim_stdout(stdout: &str) -> Result<ShimResult, String> {
    let mut lines = stdout
        .lines()
        .filter_map(|line| line.trim_end_matches('\r').strip_prefix(SHIM_SENTINEL));
    let payload = lines.next().ok_or("no result record on stdout")?;
    if lines.next().is_some() {
        return Err("more than one result record on stdout".into());
    }
    let result: ShimResult =
        serde_json::from_str(payload.trim()).map_err(|e| format!("malformed result record: {e}"))?;
    if result.status == ShimStatus::Ok && result.images.is_empty() {
        return Err("status ok without images".into());
    }
    Ok(result)
}

/// Runs scripts through the runner script at `shim_path`.
#[derive(Debug, Clone)]
pub struct ShimBackend {
    interpreter: OsString,
    shim_path: PathBuf,
}

impl ShimBackend {
    pub fn new(interpreter: impl Into<OsString>, shim_path: impl Into<PathBuf>) -> Self {
        Self {
            interpreter: interpreter.into(),
            shim_path: shim_path.into(),
        }
    }

    pub fn shim_path(&self) -> &Path {
        &self.shim_path
    }
}

/// Newest of the listed images, ties broken by list order.
fn pick_image(ws: &Path, names: &[String]) -> Option<PathBuf> {
    let stamps = snapshot_pngs(ws);
    let mut best: Option<(PathBuf, std::time::SystemTime)> = None;
    for name in names {
        if !crate::corpus::is_safe_relative_path(name) {
            continue;
        }
        let path = ws.join(name);
        let stamp = stamps
            .get(&path)
            .copied()
            .or_else(|| fs::metadata(&path).and_then(|m| m.modified()).ok());
        if let Some(stamp) = stamp {
            if best.as_ref().is_none_or(|(_, t)| stamp >= *t) {
                best = Some((path, stamp));
            }
        }
    }
    best.map(|(p, _)| p)
}

impl ExecBackend for ShimBackend {
    fn name(&self) -> &str {
        "shim"
    }

    fn execute(
        &self,
        script: &ScriptSource,
        ws: &Workspace,
        limits: &Limits,
    ) -> Result<ExecutionOutcome, SandboxError> {
        if !self.shim_path.is_file() {
            return Err(SandboxError::BackendUnavailable(format!(
                "runner script {} not found",
                self.shim_path.display()
            )));
        }
        let shim = fs::canonicalize(&self.shim_path)?;
        fs::write(ws.path().join(SCRIPT_FILE_NAME), &script.code)?;

        let mut cmd = Command::new(&self.interpreter);
        cmd.arg(&shim).arg(SCRIPT_FILE_NAME).current_dir(ws.path());
        configure_env(&mut cmd, limits);
        let run = run_child(cmd, limits)?;
        let secs = run.duration.as_secs_f64();
        let stderr = run.stderr_text();

        if run.timed_out {
            return Ok(ExecutionOutcome::timeout(timeout_traceback(&stderr, limits), secs));
        }
        if run.status.and_then(|s| s.code()).is_none() {
            return Ok(ExecutionOutcome::crashed(signal_traceback(&stderr, run.status), secs));
        }
        let stdout = String::from_utf8_lossy(&run.stdout);
        let result = match parse_shim_stdout(&stdout) {
            Ok(result) => result,
            Err(reason) => {
                let mut text = stderr.trim_end().to_string();
                if !text.is_empty() {
                    text.push('\n');
                }
                text.push_str(&format!("{CRASH_MARKER}: runner protocol violation: {reason}"));
                return Ok(ExecutionOutcome::crashed(text, secs));
            }
        };
        let outcome = match result.status {
            ShimStatus::Ok => match pick_image(ws.path(), &result.images) {
                Some(path) => ExecutionOutcome::ok(fs::read(path)?, secs),
                None => ExecutionOutcome::raised(
                    format!("{NO_FIGURE_MARKER}: runner listed images that do not exist"),
                    secs,
                ),
            },
            ShimStatus::Raised => ExecutionOutcome::raised(result.traceback, secs),
            ShimStatus::TimeoutInternal => {
                ExecutionOutcome::timeout(timeout_traceback(&result.traceback, limits), secs)
            }
        };
        Ok(outcome)
    }
}
