//! Interpreter child processes.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Read};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant, SystemTime};

use super::{
    ExecBackend, ExecutionOutcome, Limits, NetworkPolicy, SandboxError, Workspace, CRASH_MARKER,
    NO_FIGURE_MARKER, TIMEOUT_MARKER,
};
use crate::pipeline::ScriptSource;

pub const SCRIPT_FILE_NAME: &str = "__chartforge_script.py";
/// File written by the forced-save epilogue.
pub const FORCED_OUTPUT_NAME: &str = "__chartforge_output.png";

const ENV_ALLOWLIST: &[&str] = &[
    "PATH",
    "HOME",
    "USER",
    "LANG",
    "LC_ALL",
    "LC_CTYPE",
    "TZ",
    "TMPDIR",
    "PYTHONPATH",
    "VIRTUAL_ENV",
    "MPLCONFIGDIR",
];

const PROXY_VARS: &[&str] = &["http_proxy", "https_proxy", "HTTP_PROXY", "HTTPS_PROXY", "ALL_PROXY", "all_proxy"];

/// Discard port on loopback; connections through it fail immediately.
const BLACKHOLE_PROXY: &str = "http://127.0.0.1:9";

pub(crate) struct ChildRun {
    pub status: Option<ExitStatus>,
    pub timed_out: bool,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub duration: Duration,
}

impl ChildRun {
    pub fn stderr_text(&self) -> String {
        String::from_utf8_lossy(&self.stderr).into_owned()
    }
}

/// Keeps only the last `limit` bytes read from `reader`.
fn read_tail(mut reader: impl Read, limit: usize) -> Vec<u8> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 8192];
    loop {
        match reader.read(&mut chunk) {
            Ok(0) => break,
            Ok(n) => {
                buf.extend_from_slice(&chunk[..n]);
                if buf.len() > limit.saturating_mul(2).max(8192) {
                    let excess = buf.len() - limit;
                    buf.drain(..excess);
                }
            }
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(_) => break,
        }
    }
    if buf.len() > limit {
        buf.drain(..buf.len() - limit);
    }
    buf
}

fn kill_group(child: &Child) {
    let pgid = child.id() as libc::pid_t;
    // SAFETY: signalling a process group we created; ESRCH is harmless.
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
}

/// Builds the scrubbed environment shared by interpreter backends.
pub(crate) fn configure_env(cmd: &mut Command, limits: &Limits) {
    cmd.env_clear();
    for key in ENV_ALLOWLIST {
        if let Some(value) = std::env::var_os(key) {
            cmd.env(key, value);
        }
    }
    cmd.env("MPLBACKEND", "Agg")
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .env("PYTHONIOENCODING", "utf-8");
    if limits.network == NetworkPolicy::Denied {
        for key in PROXY_VARS {
            cmd.env(key, BLACKHOLE_PROXY);
        }
        cmd.env("NO_PROXY", "").env("no_proxy", "");
    }
}

/// Runs `cmd` in its own process group, capturing output tails. On timeout
/// the whole group is killed; it is also killed after a normal exit so that
/// stray grandchildren never outlive the run.
pub(crate) fn run_child(mut cmd: Command, limits: &Limits) -> Result<ChildRun, SandboxError> {
    cmd.stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    let started = Instant::now();
    let mut child = cmd.spawn().map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            SandboxError::BackendUnavailable(format!("cannot start {:?}: {e}", cmd.get_program()))
        } else {
            SandboxError::Io(e)
        }
    })?;
    let limit = limits.max_output_bytes;
    let stdout = child.stdout.take().expect("piped stdout");
    let stderr = child.stderr.take().expect("piped stderr");
    let out_reader = thread::spawn(move || read_tail(stdout, limit));
    let err_reader = thread::spawn(move || read_tail(stderr, limit));

    let deadline = started + limits.wall_timeout();
    let mut timed_out = false;
    let status = loop {
        match child.try_wait()? {
            Some(status) => break Some(status),
            None if Instant::now() >= deadline => {
                timed_out = true;
                kill_group(&child);
                child.wait()?;
                break None;
            }
            None => thread::sleep(Duration::from_millis(5)),
        }
    };
    kill_group(&child);
    let duration = started.elapsed();
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    Ok(ChildRun {
        status,
        timed_out,
        stdout,
        stderr,
        duration,
    })
}

pub(crate) fn snapshot_pngs(dir: &Path) -> HashMap<PathBuf, SystemTime> {
    let mut out = HashMap::new();
    if let Ok(entries) = fs::read_dir(dir) {
        for entry in entries.flatten() {
            let path = entry.path();
            let is_png = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"));
            if is_png {
                if let Ok(modified) = entry.metadata().and_then(|m| m.modified()) {
                    out.insert(path, modified);
                }
            }
        }
    }
    out
}

/// Newest PNG in `dir` that is new or modified relative to `before`.
pub(crate) fn newest_png(dir: &Path, before: &HashMap<PathBuf, SystemTime>) -> Option<PathBuf> {
    snapshot_pngs(dir)
        .into_iter()
        .filter(|(path, modified)| before.get(path) != Some(modified))
        .max_by(|(pa, ma), (pb, mb)| ma.cmp(mb).then_with(|| pa.cmp(pb)))
        .map(|(path, _)| path)
}

pub(crate) fn timeout_traceback(stderr: &str, limits: &Limits) -> String {
    let mut text = stderr.trim_end().to_string();
    if !text.is_empty() {
        text.push('\n');
    }
    text.push_str(&format!(
        "{TIMEOUT_MARKER}: script exceeded the wall timeout of {}s",
        limits.wall_timeout().as_secs()
    ));
    text
}

pub(crate) fn signal_traceback(stderr: &str, status: Option<ExitStatus>) -> String {
    let mut text = stderr.trim_end().to_string();
    if !text.is_empty() {
        text.push('\n');
    }
    let signal = status.and_then(|s| s.signal()).unwrap_or_default();
    text.push_str(&format!("{CRASH_MARKER}: interpreter terminated by signal {signal}"));
    text
}

pub(crate) fn no_figure_traceback(stderr: &str) -> String {
    let mut text = stderr.trim_end().to_string();
    if !text.is_empty() {
        text.push('\n');
    }
    text.push_str(&format!(
        "{NO_FIGURE_MARKER}: script exited cleanly without writing a PNG image"
    ));
    text
}

/// Runs scripts with a local Python interpreter.
#[derive(Debug, Clone)]
pub struct ProcessBackend {
    interpreter: OsString,
    force_save: bool,
}

impl Default for ProcessBackend {
    fn default() -> Self {
        Self::new("python3")
    }
}

impl ProcessBackend {
    pub fn new(interpreter: impl Into<OsString>) -> Self {
        Self {
            interpreter: interpreter.into(),
            force_save: true,
        }
    }

    /// Disables the forced-save epilogue.
    pub fn without_forced_save(mut self) -> Self {
        self.force_save = false;
        self
    }

    /// The script as written to disk: the candidate code, plus an epilogue
    /// that saves the active figure when the code never saves one itself.
    /// The epilogue is appended so traceback line numbers stay unchanged.
    pub fn prepared_source(&self, code: &str) -> String {
        if !self.force_save || code.contains("savefig") {
            return code.to_string();
        }
        let mut source = code.trim_end().to_string();
        source.push_str(&format!(
            "\n\n\
import matplotlib.pyplot as __chartforge_plt\n\
if __chartforge_plt.get_fignums():\n    \
__chartforge_plt.savefig({FORCED_OUTPUT_NAME:?})\n"
        ));
        source
    }
}

impl ExecBackend for ProcessBackend {
    fn name(&self) -> &str {
        "process"
    }

    fn execute(
        &self,
        script: &ScriptSource,
        ws: &Workspace,
        limits: &Limits,
    ) -> Result<ExecutionOutcome, SandboxError> {
        let script_path = ws.path().join(SCRIPT_FILE_NAME);
        fs::write(&script_path, self.prepared_source(&script.code))?;
        let before = snapshot_pngs(ws.path());

        let mut cmd = Command::new(&self.interpreter);
        cmd.arg(SCRIPT_FILE_NAME).current_dir(ws.path());
        configure_env(&mut cmd, limits);
        let run = run_child(cmd, limits)?;
        let secs = run.duration.as_secs_f64();
        let stderr = run.stderr_text();

        if run.timed_out {
            return Ok(ExecutionOutcome::timeout(timeout_traceback(&stderr, limits), secs));
        }
        let outcome = match run.status.and_then(|s| s.code()) {
            Some(0) => match newest_png(ws.path(), &before) {
                Some(png) => ExecutionOutcome::ok(fs::read(png)?, secs),
                None => ExecutionOutcome::raised(no_figure_traceback(&stderr), secs),
            },
            Some(code) if stderr.trim().is_empty() => ExecutionOutcome::raised(
                format!("{CRASH_MARKER}: interpreter exited with status {code}"),
                secs,
            ),
            Some(_) => ExecutionOutcome::raised(stderr, secs),
            None => ExecutionOutcome::crashed(signal_traceback(&stderr, run.status), secs),
        };
        Ok(outcome)
    }
}
