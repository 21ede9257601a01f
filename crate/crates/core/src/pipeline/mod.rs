//! Draft agent, reflect/rewrite repair agent and the loop supervising them.
//!
//! One task runs as: draft, execute, then while the latest attempt failed
//! and the repair budget is not spent, reflect on the failure, rewrite the
//! script and execute again. Every attempt is kept in the [`PipelineRecord`].

mod extract;
mod prompts;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CategoryLabel, ChartTask, TaskSet};
use crate::gateway::{complete, ChatRequest, GatewayError, ProviderHandle};
use crate::sandbox::{prepare_workspace, ExecBackend, ExecutionOutcome, Limits, CRASH_MARKER};

pub use extract::extract_code;
pub use prompts::{
    build_draft_request, build_reflection_request, build_rewrite_request, draft_user_message,
    CODE_PREAMBLE, DRAFT_SYSTEM_PROMPT, REFLECTION_HEAD, REFLECTION_INSTRUCTION, REWRITER_SYSTEM_PROMPT,
};

/// Synthetic traceback for completions that contain no code.
pub const EMPTY_COMPLETION_TRACEBACK: &str = "EmptyCompletion";
pub const DEFAULT_MAX_REPAIR_ITERATIONS: u32 = 3;
pub const DEFAULT_WORKERS: usize = 4;
pub const DEFAULT_MODEL: &str = "gpt-4o-mini";

const FEW_SHOT_FIXTURE: &str = include_str!("../../fixtures/fewshot_exemplars.json");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    #[error("task `{0}` has an empty description")]
    EmptyDescription(String),
    #[error("few-shot mode needs at least one exemplar")]
    NoExemplars,
    #[error("reflection needs a non-empty error text")]
    EmptyErrorText,
    #[error("rewrite needs a non-empty suggestion")]
    EmptySuggestion,
    #[error("completion contained no code")]
    EmptyCode,
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub description: String,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "exemplars", rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    FewShot(Vec<Exemplar>),
}

impl PromptMode {
    /// Few-shot with the two bundled exemplars.
    pub fn default_few_shot() -> Self {
        PromptMode::FewShot(bundled_exemplars())
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            PromptMode::ZeroShot => "zs",
            PromptMode::FewShot(_) => "fs",
        }
    }
}

pub fn bundled_exemplars() -> Vec<Exemplar> {
    serde_json::from_str(FEW_SHOT_FIXTURE).expect("bundled exemplar fixture is valid JSON")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScriptOrigin {
    Draft,
    Repair { iteration: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptSource {
    pub code: String,
    pub origin: ScriptOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub script: ScriptSource,
    pub outcome: ExecutionOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FinalStatus {
    /// `iteration_fixed` is the index of the first clean attempt; 0 means
    /// the draft ran.
    Success { iteration_fixed: u32 },
    Failed,
}

impl FinalStatus {
    pub fn is_success(self) -> bool {
        matches!(self, FinalStatus::Success { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRecord {
    pub task_id: String,
    pub category: CategoryLabel,
    /// Absent only when the draft call itself failed.
    pub draft: Option<ScriptSource>,
    pub attempts: Vec<Attempt>,
    pub final_status: FinalStatus,
    pub suggestions: Vec<String>,
    /// Gateway or configuration error that ended the task early.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PipelineRecord {
    pub fn final_image(&self) -> Option<&[u8]> {
        match self.final_status {
            FinalStatus::Success { .. } => self.attempts.last()?.outcome.image.as_deref(),
            FinalStatus::Failed => None,
        }
    }

    pub fn final_code(&self) -> Option<&str> {
        self.attempts.last().map(|a| a.script.code.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub prompt_mode: PromptMode,
    pub max_repair_iterations: u32,
    pub execution_limits: Limits,
    pub model_name: String,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_workers() -> usize {
    DEFAULT_WORKERS
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            prompt_mode: PromptMode::ZeroShot,
            max_repair_iterations: DEFAULT_MAX_REPAIR_ITERATIONS,
            execution_limits: Limits::default(),
            model_name: DEFAULT_MODEL.into(),
            workers: DEFAULT_WORKERS,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if let PromptMode::FewShot(ex) = &self.prompt_mode {
            if ex.is_empty() {
                return Err(PipelineError::NoExemplars);
            }
        }
        if self.model_name.trim().is_empty() {
            return Err(PipelineError::InvalidConfig("model name is empty".into()));
        }
        if self.workers == 0 {
            return Err(PipelineError::InvalidConfig("worker count is zero".into()));
        }
        Ok(())
    }
}

fn run_script(
    task: &ChartTask,
    script: &ScriptSource,
    limits: &Limits,
    executor: &dyn ExecBackend,
) -> ExecutionOutcome {
    let result = prepare_workspace(task).and_then(|ws| executor.execute(script, &ws, limits));
    result.unwrap_or_else(|e| {
        log::warn!("task {}: executor error: {e}", task.id);
        ExecutionOutcome::crashed(format!("{CRASH_MARKER}: {e}"), 0.0)
    })
}

/// Turns a completion into an attempt, recording an empty completion as a
/// failed attempt with the raw text kept as its code.
fn attempt_from_completion(
    task: &ChartTask,
    text: &str,
    origin: ScriptOrigin,
    cfg: &PipelineConfig,
    executor: &dyn ExecBackend,
) -> Attempt {
    match extract_code(text, origin) {
        Ok(script) => {
            let outcome = run_script(task, &script, &cfg.execution_limits, executor);
            Attempt { script, outcome }
        }
        Err(_) => Attempt {
            script: ScriptSource {
                code: text.to_string(),
                origin,
            },
            outcome: ExecutionOutcome::raised(EMPTY_COMPLETION_TRACEBACK, 0.0),
        },
    }
}

fn ask(request: ChatRequest, task: &ChartTask, provider: &ProviderHandle) -> Result<String, GatewayError> {
    complete(&request.with_tag(task.id.clone()), provider).map(|c| c.text)
}

/// Runs the draft and up to `cfg.max_repair_iterations` repairs for one task.
pub fn run_task(
    task: &ChartTask,
    cfg: &PipelineConfig,
    provider: &ProviderHandle,
    executor: &dyn ExecBackend,
) -> PipelineRecord {
    let mut record = PipelineRecord {
        task_id: task.id.clone(),
        category: task.category,
        draft: None,
        attempts: Vec::new(),
        final_status: FinalStatus::Failed,
        suggestions: Vec::new(),
        error: None,
    };
    if let Err(e) = cfg.validate() {
        record.error = Some(e.to_string());
        return record;
    }
    let draft_text = match build_draft_request(task, &cfg.prompt_mode, &cfg.model_name)
        .map_err(|e| e.to_string())
        .and_then(|req| ask(req, task, provider).map_err(|e| e.to_string()))
    {
        Ok(text) => text,
        Err(e) => {
            log::warn!("task {}: draft failed: {e}", task.id);
            record.error = Some(e);
            return record;
        }
    };
    let first = attempt_from_completion(task, &draft_text, ScriptOrigin::Draft, cfg, executor);
    record.draft = Some(first.script.clone());
    record.attempts.push(first);

    for iteration in 1..=cfg.max_repair_iterations {
        let last = record.attempts.last().expect("draft attempt recorded");
        if last.outcome.is_success() {
            break;
        }
        let failed_script = last.script.clone();
        let error_text = last.outcome.error_text();
        let step = build_reflection_request(&failed_script, &error_text, &cfg.model_name)
            .map_err(|e| e.to_string())
            .and_then(|req| ask(req, task, provider).map_err(|e| e.to_string()))
            .and_then(|suggestion| {
                record.suggestions.push(suggestion.clone());
                build_rewrite_request(&failed_script, &suggestion, &cfg.model_name)
                    .map_err(|e| e.to_string())
            })
            .and_then(|req| ask(req, task, provider).map_err(|e| e.to_string()));
        match step {
            Ok(text) => {
                let origin = ScriptOrigin::Repair { iteration };
                let attempt = attempt_from_completion(task, &text, origin, cfg, executor);
                record.attempts.push(attempt);
            }
            Err(e) => {
                log::warn!("task {}: repair iteration {iteration} failed: {e}", task.id);
                record.error = Some(e);
                break;
            }
        }
    }

    record.final_status = match record.attempts.iter().position(|a| a.outcome.is_success()) {
        Some(k) if k + 1 == record.attempts.len() => FinalStatus::Success {
            iteration_fixed: k as u32,
        },
        _ => FinalStatus::Failed,
    };
    record
}

/// Runs every task on a bounded worker pool; records come back in input order.
pub fn run_suite(
    tasks: &TaskSet,
    cfg: &PipelineConfig,
    provider: &ProviderHandle,
    executor: &dyn ExecBackend,
) -> Vec<PipelineRecord> {
    let total = tasks.tasks.len();
    let workers = cfg.workers.clamp(1, total.max(1));
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<PipelineRecord>>> = Mutex::new(vec![None; total]);
    let started = Instant::now();

    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(task) = tasks.tasks.get(i) else {
                    break;
                };
                let t0 = Instant::now();
                let record = run_task(task, cfg, provider, executor);
                let finished = done.fetch_add(1, Ordering::SeqCst) + 1;
                log::info!(
                    "[{finished}/{total}] task {} {:?} in {:.2}s",
                    task.id,
                    record.final_status,
                    t0.elapsed().as_secs_f64()
                );
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(record);
            });
        }
    });
    log::info!("suite of {total} tasks finished in {:.1}s", started.elapsed().as_secs_f64());
    slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.expect("every task slot filled"))
        .collect()
}
