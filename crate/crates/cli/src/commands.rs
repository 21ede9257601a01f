use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use chartforge::corpus::{load_taskset, sanitize_file_stem, write_taskset, LayoutSpec, TaskSet};
use chartforge::gateway::http::{OpenAiCompatible, API_BASE_ENV, API_KEY_ENV, DEFAULT_API_BASE};
use chartforge::gateway::{MockProvider, ProviderHandle};
use chartforge::judge::{audit_suite, perceptual_suite, AuditEntry, AuditSummary, PerceptualEntry, PerceptualSummary};
use chartforge::metrics::error_ratio;
use chartforge::pipeline::{run_suite, Exemplar, PipelineConfig, PipelineRecord, PromptMode};
use chartforge::report::{
    audit_table, error_table, errors_topk_table, image_detail_table, image_table, iterations_table,
    similarity_detail_table, similarity_table, ReportError, Table, TableKind,
};
use chartforge::sandbox::{ExecBackend, FakeBackend, Limits, ProcessBackend, ShimBackend};

use crate::args::{
    BackendArg, FormatArg, JudgeArgs, JudgeKindArg, LayoutArg, ModeArg, ProviderArg, ProviderArgs, ReportArgs,
    RunArgs,
};
use crate::manifest::*;
use crate::{read_file, write_file, CliError};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// The live provider refuses to start without a key, so hermetic runs can
/// never reach a paid endpoint.
fn build_provider(args: &ProviderArgs) -> Result<(ProviderHandle, ProviderInfo), CliError> {
    match args.provider {
        ProviderArg::Live => {
            if std::env::var(API_KEY_ENV).map_or(true, |k| k.is_empty()) {
                return Err(usage(format!("--provider live needs {API_KEY_ENV} to be set")));
            }
            let backend = OpenAiCompatible::from_env().map_err(|e| usage(e.to_string()))?;
            let endpoint = std::env::var(API_BASE_ENV)
                .ok()
                .filter(|b| !b.is_empty())
                .unwrap_or_else(|| DEFAULT_API_BASE.to_string());
            let handle = ProviderHandle::new(Arc::new(backend)).with_concurrency(args.workers.max(1));
            Ok((
                handle,
                ProviderInfo {
                    kind: "live".into(),
                    endpoint: Some(endpoint),
                    mock_script: None,
                },
            ))
        }
        ProviderArg::Mock => {
            let path = args
                .mock_script
                .as_ref()
                .ok_or_else(|| usage("--provider mock needs --mock-script"))?;
            let script: Value = serde_json::from_str(&read_file(path)?)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let mock = MockProvider::from_json(&script).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            Ok((
                ProviderHandle::new(Arc::new(mock)),
                ProviderInfo {
                    kind: "mock".into(),
                    endpoint: None,
                    mock_script: Some(script),
                },
            ))
        }
    }
}

fn build_backend(args: &RunArgs) -> Result<(Box<dyn ExecBackend>, BackendInfo), CliError> {
    match args.backend {
        BackendArg::Fake => {
            let (backend, rules) = match &args.fake_script {
                Some(path) => {
                    let text = read_file(path)?;
                    let backend =
                        FakeBackend::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                    let rules: Value = serde_json::from_str(&text).expect("validated by from_json");
                    (backend, Some(rules))
                }
                None => (FakeBackend::always_ok(), None),
            };
            Ok((
                Box::new(backend),
                BackendInfo {
                    kind: "fake".into(),
                    interpreter: None,
                    shim: None,
                    fake_rules: rules,
                },
            ))
        }
        BackendArg::Process => Ok((
            Box::new(ProcessBackend::new(&args.python)),
            BackendInfo {
                kind: "process".into(),
                interpreter: Some(args.python.clone()),
                shim: None,
                fake_rules: None,
            },
        )),
        BackendArg::Shim => {
            let shim = args.shim.as_ref().ok_or_else(|| usage("--backend shim needs --shim"))?;
            Ok((
                Box::new(ShimBackend::new(&args.python, shim)),
                BackendInfo {
                    kind: "shim".into(),
                    interpreter: Some(args.python.clone()),
                    shim: Some(shim.display().to_string()),
                    fake_rules: None,
                },
            ))
        }
    }
}

fn prompt_mode(args: &RunArgs) -> Result<PromptMode, CliError> {
    match (args.mode, &args.exemplars) {
        (ModeArg::Zs, None) => Ok(PromptMode::ZeroShot),
        (ModeArg::Zs, Some(_)) => Err(usage("--exemplars only applies to --mode fs")),
        (ModeArg::Fs, None) => Ok(PromptMode::default_few_shot()),
        (ModeArg::Fs, Some(path)) => {
            let ex: Vec<Exemplar> = serde_json::from_str(&read_file(path)?)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?;
            Ok(PromptMode::FewShot(ex))
        }
    }
}

fn layout(arg: LayoutArg) -> LayoutSpec {
    match arg {
        LayoutArg::T2c31 => LayoutSpec::T2C31,
        LayoutArg::Chartx => LayoutSpec::CHARTX,
    }
}

fn prepare_run_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_or(true, |mut d| d.next().is_some());
        if non_empty && !force {
            return Err(usage(format!(
                "{} already exists and is not empty (use --force to replace it)",
                dir.display()
            )));
        }
        fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    for sub in [SCRIPTS_DIR, IMAGES_DIR, REPORTS_DIR] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| CliError::io(&p, e))?;
    }
    Ok(())
}

fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}

fn from_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    read_file(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Runtime(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn write_artifacts(dir: &Path, records: &[PipelineRecord]) -> Result<(), CliError> {
    for r in records {
        let stem = sanitize_file_stem(&r.task_id);
        let task_dir = dir.join(SCRIPTS_DIR).join(&stem);
        fs::create_dir_all(&task_dir).map_err(|e| CliError::io(&task_dir, e))?;
        for (k, attempt) in r.attempts.iter().enumerate() {
            write_file(&task_dir.join(format!("attempt_{k}.py")), attempt.script.code.as_bytes())?;
            if let Some(tb) = &attempt.outcome.traceback {
                write_file(&task_dir.join(format!("attempt_{k}.traceback.txt")), tb.as_bytes())?;
            }
        }
        for (k, s) in r.suggestions.iter().enumerate() {
            write_file(&task_dir.join(format!("suggestion_{}.txt", k + 1)), s.as_bytes())?;
        }
        if let Some(png) = r.final_image() {
            write_file(&dir.join(IMAGES_DIR).join(format!("{stem}.png")), png)?;
        }
    }
    Ok(())
}

/// Everything a report needs, all read from a run directory.
pub struct RunContext {
    pub manifest: RunManifest,
    pub records: Vec<PipelineRecord>,
    pub tasks: TaskSet,
    pub audit: Option<AuditSummary>,
    pub perceptual: Option<PerceptualSummary>,
}

impl RunContext {
    pub fn load(run_dir: &Path) -> Result<Self, CliError> {
        let manifest = RunManifest::load(run_dir)?;
        let records = from_jsonl(&run_dir.join(RECORDS_FILE))?;
        let tasks = load_taskset(&run_dir.join(DATASET_DIR).join(DATASET_FILE), LayoutSpec::T2C31)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let reports = run_dir.join(REPORTS_DIR);
        let audit_path = reports.join(AUDIT_FILE);
        let audit = if audit_path.exists() {
            Some(AuditSummary::from_entries(from_jsonl::<AuditEntry>(&audit_path)?))
        } else {
            None
        };
        let perceptual_path = reports.join(PERCEPTUAL_FILE);
        let perceptual = if perceptual_path.exists() {
            Some(PerceptualSummary::from_entries(from_jsonl::<PerceptualEntry>(&perceptual_path)?))
        } else {
            None
        };
        Ok(Self {
            manifest,
            records,
            tasks,
            audit,
            perceptual,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TableOptions {
    pub detail: bool,
    pub attempt: usize,
    pub k: usize,
    pub label: Option<String>,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            detail: false,
            attempt: 0,
            k: 3,
            label: None,
        }
    }
}

pub fn render_table(kind: TableKind, ctx: &RunContext, opts: &TableOptions) -> Result<Table, ReportError> {
    let label = opts.label.as_deref().unwrap_or(&ctx.manifest.label);
    let (records, tasks) = (&ctx.records, &ctx.tasks);
    match kind {
        TableKind::Error => error_table(label, records, tasks),
        TableKind::Iterations => Ok(iterations_table(
            label,
            records,
            ctx.manifest.config.max_repair_iterations,
        )),
        TableKind::ErrorsTopk => Ok(errors_topk_table(records, opts.attempt, opts.k)),
        TableKind::Similarity if opts.detail => similarity_detail_table(records, tasks),
        TableKind::Similarity => similarity_table(label, records, tasks),
        TableKind::Image if opts.detail => image_detail_table(records, tasks),
        TableKind::Image => image_table(label, records, tasks, ctx.perceptual.as_ref()),
        TableKind::Audit => audit_table(label, ctx.audit.as_ref()),
    }
}

fn encode(table: &Table, format: FormatArg) -> Result<String, CliError> {
    match format {
        FormatArg::Csv => table.to_csv().map_err(|e| CliError::Runtime(e.to_string())),
        FormatArg::Json => Ok(table.to_json()),
    }
}

/// Writes every table the run has inputs for into `reports/`.
pub fn write_reports(run_dir: &Path, ctx: &RunContext) -> Result<Vec<TableKind>, CliError> {
    let mut written = Vec::new();
    for kind in TableKind::ALL {
        match render_table(kind, ctx, &TableOptions::default()) {
            Ok(table) => {
                let base = run_dir.join(REPORTS_DIR).join(kind.name());
                write_file(&base.with_extension("csv"), encode(&table, FormatArg::Csv)?.as_bytes())?;
                write_file(&base.with_extension("json"), encode(&table, FormatArg::Json)?.as_bytes())?;
                written.push(kind);
            }
            Err(ReportError::MissingInputs(why)) => log::debug!("skipping {} table: {why}", kind.name()),
            Err(e) => return Err(CliError::Runtime(e.to_string())),
        }
    }
    Ok(written)
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    // Cheap configuration checks first, before touching the filesystem.
    let (provider, provider_info) = build_provider(&args.provider)?;
    let (backend, backend_info) = build_backend(args)?;
    let config = PipelineConfig {
        prompt_mode: prompt_mode(args)?,
        max_repair_iterations: args.max_iters,
        execution_limits: Limits {
            wall_timeout_secs: args.timeout,
            ..Limits::default()
        },
        model_name: args.provider.model.clone(),
        workers: args.provider.workers,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let layout = layout(args.layout);
    let tasks = load_taskset(&args.dataset, layout).map_err(|e| usage(e.to_string()))?;

    prepare_run_dir(&args.out, args.force)?;
    write_taskset(&tasks, &args.out.join(DATASET_DIR), DATASET_FILE).map_err(|e| CliError::Runtime(e.to_string()))?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        label: args.label.clone().unwrap_or_else(|| default_label(&config)),
        dataset: DatasetInfo {
            source: args.dataset.display().to_string(),
            name: tasks.name.clone(),
            layout: layout.name.into(),
            tasks: tasks.len(),
        },
        config: config.clone(),
        provider: provider_info,
        backend: backend_info,
        seed: args.seed,
        created_unix_secs: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        outputs: OutputLayout::default(),
    };
    manifest.save(&args.out)?;

    let records = run_suite(&tasks, &config, &provider, backend.as_ref());
    write_file(&args.out.join(RECORDS_FILE), to_jsonl(&records).as_bytes())?;
    write_artifacts(&args.out, &records)?;

    let ratios = error_ratio(&records, &tasks).map_err(|e| CliError::Runtime(e.to_string()))?;
    let ctx = RunContext {
        manifest,
        records,
        tasks,
        audit: None,
        perceptual: None,
    };
    write_reports(&args.out, &ctx)?;
    writeln!(
        out,
        "{} tasks, {} failed, error ratio {}% -> {}",
        ratios.overall.total,
        ratios.overall.failures,
        ratios.overall.render(),
        args.out.display()
    )
    .map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn cmd_report(args: &ReportArgs, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let ctx = RunContext::load(&args.run_dir)?;
    let opts = TableOptions {
        detail: args.detail,
        attempt: args.attempt,
        k: args.k,
        label: args.label.clone(),
    };
    let table = render_table(args.table.into(), &ctx, &opts).map_err(|e| match e {
        ReportError::MissingInputs(m) => CliError::MissingInputs(m),
        other => CliError::Runtime(other.to_string()),
    })?;
    let text = encode(&table, args.format)?;
    match &args.output {
        Some(path) => write_file(path, text.as_bytes()),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Runtime(e.to_string())),
    }
}

pub fn cmd_judge(args: &JudgeArgs, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let (provider, _) = build_provider(&args.provider)?;
    let mut ctx = RunContext::load(&args.run_dir)?;
    let reports = args.run_dir.join(REPORTS_DIR);
    let (model, workers) = (&args.provider.model, args.provider.workers);
    let w = |e: std::io::Error| CliError::Runtime(e.to_string());
    if matches!(args.kind, JudgeKindArg::Perceptual | JudgeKindArg::Both) {
        let summary = perceptual_suite(&ctx.records, &ctx.tasks, &provider, model, workers);
        write_file(&reports.join(PERCEPTUAL_FILE), to_jsonl(&summary.entries).as_bytes())?;
        let mean = summary.mean.map_or_else(|| "n/a".into(), |m| format!("{m:.1}"));
        writeln!(out, "perceptual: mean {mean} over {} pairs", summary.participating).map_err(w)?;
        ctx.perceptual = Some(summary);
    }
    if matches!(args.kind, JudgeKindArg::Audit | JudgeKindArg::Both) {
        let summary = audit_suite(&ctx.records, &provider, model, workers);
        write_file(&reports.join(AUDIT_FILE), to_jsonl(&summary.entries).as_bytes())?;
        let rate = summary.pass_rate().unwrap_or_else(|| "n/a".into());
        writeln!(out, "audit: {rate}% appropriate over {} charts", summary.participating).map_err(w)?;
        ctx.audit = Some(summary);
    }
    write_reports(&args.run_dir, &ctx)?;
    Ok(())
}
