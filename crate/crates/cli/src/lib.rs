//! Command-line driver: pipeline runs, report tables, judge passes and
//! review samples, all organised around one run directory.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod args;
mod commands;
mod manifest;
mod sample;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use args::*;
pub use commands::{cmd_judge, cmd_report, cmd_run, render_table, write_reports, RunContext, TableOptions};
pub use manifest::*;
pub use sample::{cmd_sample, sample_indices, side_by_side, ReviewRow, REVIEW_LABELS};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("sample needs {need} records with images, run has {have}")]
    NotEnoughRecords { have: usize, need: usize },
    #[error("missing inputs: {0}")]
    MissingInputs(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Report(a) => cmd_report(a, out),
        Command::Judge(a) => cmd_judge(a, out),
        Command::Sample(a) => cmd_sample(a, out).map(|_| ()),
    }
}
