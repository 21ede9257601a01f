use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use chartforge::pipeline::{DEFAULT_MAX_REPAIR_ITERATIONS, DEFAULT_MODEL, DEFAULT_WORKERS};
use chartforge::report::TableKind;

#[derive(Debug, Parser)]
#[command(name = "chartforge", version, about = "Draft, execute and repair chart scripts, then score them")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the pipeline over a dataset and write a run directory.
    Run(RunArgs),
    /// Render a table from an existing run directory.
    Report(ReportArgs),
    /// Score a run with the multimodal judge.
    Judge(JudgeArgs),
    /// Draw a seeded review sample of produced charts.
    Sample(SampleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Zs,
    Fs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Fake,
    Process,
    Shim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderArg {
    Live,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    T2c31,
    Chartx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableArg {
    Error,
    Similarity,
    Image,
    Iterations,
    ErrorsTopk,
    Audit,
}

impl From<TableArg> for TableKind {
    fn from(t: TableArg) -> Self {
        match t {
            TableArg::Error => TableKind::Error,
            TableArg::Similarity => TableKind::Similarity,
            TableArg::Image => TableKind::Image,
            TableArg::Iterations => TableKind::Iterations,
            TableArg::ErrorsTopk => TableKind::ErrorsTopk,
            TableArg::Audit => TableKind::Audit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JudgeKindArg {
    Perceptual,
    Audit,
    Both,
}

/// Provider selection shared by `run` and `judge`.
#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    /// `live` needs CHARTFORGE_API_KEY (and optionally CHARTFORGE_API_BASE).
    #[arg(long, value_enum, default_value = "live")]
    pub provider: ProviderArg,
    /// JSON reply script for `--provider mock`: an array, or an object of
    /// arrays keyed by task id.
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_MODEL)]
    pub model: String,
    #[arg(long, default_value_t = DEFAULT_WORKERS)]
    pub workers: usize,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON-lines task file.
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "t2c31")]
    pub layout: LayoutArg,
    #[arg(long, value_enum, default_value = "zs")]
    pub mode: ModeArg,
    /// JSON array of {description, code} exemplars for few-shot mode.
    #[arg(long)]
    pub exemplars: Option<PathBuf>,
    /// Repair budget; 0 is the draft-only baseline.
    #[arg(long, default_value_t = DEFAULT_MAX_REPAIR_ITERATIONS)]
    pub max_iters: u32,
    #[arg(long, value_enum, default_value = "process")]
    pub backend: BackendArg,
    /// JSON rule list for `--backend fake`.
    #[arg(long)]
    pub fake_script: Option<PathBuf>,
    /// Runner script for `--backend shim`.
    #[arg(long)]
    pub shim: Option<PathBuf>,
    #[arg(long, default_value = "python3")]
    pub python: String,
    /// Wall-clock limit per script execution, in seconds.
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// Recorded in the manifest.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Row label used in report tables.
    #[arg(long)]
    pub label: Option<String>,
    /// Run directory to create.
    #[arg(long)]
    pub out: PathBuf,
    /// Replace an existing run directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    pub run_dir: PathBuf,
    #[arg(long, value_enum)]
    pub table: TableArg,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    /// Write here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Per-task rows for the similarity and image tables.
    #[arg(long)]
    pub detail: bool,
    /// Attempt index for errors-topk; 0 is the draft.
    #[arg(long, default_value_t = 0)]
    pub attempt: usize,
    /// Rows for errors-topk.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Override the row label from the manifest.
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct JudgeArgs {
    pub run_dir: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub kind: JudgeKindArg,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    pub run_dir: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bundle directory; defaults to `<run_dir>/review-<seed>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
