//! Execution error ratios, iteration statistics, code similarity and image
//! similarity over finished pipeline records.
//!
//! Everything here is a pure function of its inputs.

mod codebleu;
mod meteor;
mod ssim;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CategoryLabel, TaskSet};
use crate::pipeline::{FinalStatus, PipelineRecord};

pub use codebleu::{bleu, codebleu, dataflow_match, syntax_match, weighted_bleu, CodeBleuParams, CodeBleuScore};
pub use meteor::{align, count_chunks, meteor, meteor_code, meteor_from_counts, MeteorParams};
pub use ssim::{
    clamp_unit, contrast_structure, decode_png, ssim, ssim_gray, ssim_png, to_gray, SsimParams, SsimWindow,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("token sequence is empty")]
    EmptySequence,
    #[error("source has no code tokens")]
    EmptySource,
    #[error("invalid metric parameters: {0}")]
    InvalidParams(String),
    #[error("cannot decode image: {0}")]
    DecodeFailure(String),
    #[error("image {width}x{height} is smaller than the {window}px window")]
    DegenerateImage { width: u32, height: u32, window: usize },
    #[error("image shapes differ: {a:?} vs {b:?}")]
    ShapeMismatch { a: (u32, u32), b: (u32, u32) },
    #[error("record task id `{0}` is not in the task set")]
    IdMismatch(String),
}

/// Maps task ids to their category.
pub trait CategoryLookup {
    fn category(&self, task_id: &str) -> Option<CategoryLabel>;
}

impl CategoryLookup for TaskSet {
    fn category(&self, task_id: &str) -> Option<CategoryLabel> {
        self.get(task_id).map(|t| t.category)
    }
}

impl CategoryLookup for BTreeMap<String, CategoryLabel> {
    fn category(&self, task_id: &str) -> Option<CategoryLabel> {
        self.get(task_id).copied()
    }
}

/// Failure count over a total. The counts are authoritative; percentages
/// are derived on demand.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatioCell {
    pub failures: usize,
    pub total: usize,
}

impl RatioCell {
    pub fn new(failures: usize, total: usize) -> Self {
        debug_assert!(failures <= total);
        Self { failures, total }
    }

    pub fn percent(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.failures as f64 / self.total as f64)
    }

    /// Percentage in hundredths, rounded half up with integer arithmetic.
    pub fn hundredths(&self) -> Option<u64> {
        if self.total == 0 {
            return None;
        }
        let (f, t) = (self.failures as u64, self.total as u64);
        Some((f * 20_000 + t) / (2 * t))
    }

    /// Two-decimal rendering, `n/a` for an empty cell.
    pub fn render(&self) -> String {
        match self.hundredths() {
            Some(h) => format!("{}.{:02}", h / 100, h % 100),
            None => "n/a".to_string(),
        }
    }

    pub fn merge(self, other: RatioCell) -> RatioCell {
        RatioCell::new(self.failures + other.failures, self.total + other.total)
    }
}

impl fmt::Display for RatioCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRatioTable {
    pub per_category: BTreeMap<CategoryLabel, RatioCell>,
    pub overall: RatioCell,
}

impl ErrorRatioTable {
    pub fn cell(&self, category: CategoryLabel) -> RatioCell {
        self.per_category.get(&category).copied().unwrap_or_default()
    }
}

/// A record counts as a failure when its final status is `Failed`. The
/// category comes from the task set, not from the record.
pub fn error_ratio(records: &[PipelineRecord], tasks: &impl CategoryLookup) -> Result<ErrorRatioTable, MetricError> {
    let mut table = ErrorRatioTable::default();
    for record in records {
        let category = tasks
            .category(&record.task_id)
            .ok_or_else(|| MetricError::IdMismatch(record.task_id.clone()))?;
        let failed = usize::from(!record.final_status.is_success());
        let cell = table.per_category.entry(category).or_default();
        cell.failures += failed;
        cell.total += 1;
        table.overall.failures += failed;
        table.overall.total += 1;
    }
    Ok(table)
}

/// Records fixed by repair iteration k (k >= 1), bucketed by k.
pub fn iteration_fix_counts(records: &[PipelineRecord]) -> BTreeMap<u32, usize> {
    let mut counts = BTreeMap::new();
    for r in records {
        if let FinalStatus::Success { iteration_fixed } = r.final_status {
            if iteration_fixed >= 1 {
                *counts.entry(iteration_fixed).or_insert(0) += 1;
            }
        }
    }
    counts
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub task_id: String,
    pub meteor: f64,
    pub codebleu: CodeBleuScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub rows: Vec<SimilarityRow>,
    pub mean_meteor: Option<f64>,
    pub mean_codebleu: Option<f64>,
    /// Task ids that could not be scored, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// METEOR and CodeBLEU of each record's final script against the task's
/// reference script. Records without code or tasks without a reference
/// are skipped.
pub fn similarity_suite(
    records: &[PipelineRecord],
    tasks: &TaskSet,
    meteor_params: &MeteorParams,
    codebleu_params: &CodeBleuParams,
) -> SimilarityReport {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for record in records {
        let Some(task) = tasks.get(&record.task_id) else {
            skipped.push((record.task_id.clone(), "unknown task".to_string()));
            continue;
        };
        let (Some(code), Some(reference)) = (record.final_code(), task.reference_code.as_deref()) else {
            continue;
        };
        let scored = meteor_code(code, reference, meteor_params)
            .and_then(|m| Ok((m, codebleu(code, reference, codebleu_params)?)));
        match scored {
            Ok((meteor, codebleu)) => rows.push(SimilarityRow {
                task_id: record.task_id.clone(),
                meteor,
                codebleu,
            }),
            Err(e) => skipped.push((record.task_id.clone(), e.to_string())),
        }
    }
    SimilarityReport {
        mean_meteor: mean(rows.iter().map(|r| r.meteor)),
        mean_codebleu: mean(rows.iter().map(|r| r.codebleu.score)),
        rows,
        skipped,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageQualityReport {
    /// (task id, SSIM clamped to [0, 1])
    pub per_task: Vec<(String, f64)>,
    /// Absent when no pair participated.
    pub mean: Option<f64>,
    pub participating: usize,
    pub records_total: usize,
    pub errors: Vec<(String, String)>,
}

/// SSIM of each produced image against its reference image.
pub fn image_quality_suite(records: &[PipelineRecord], tasks: &TaskSet, p: &SsimParams) -> ImageQualityReport {
    let mut per_task = Vec::new();
    let mut errors = Vec::new();
    for record in records {
        let Some(image) = record.final_image() else { continue };
        let Some(reference) = tasks.get(&record.task_id).and_then(|t| t.reference_image.as_deref()) else {
            continue;
        };
        match ssim_png(reference, image, p) {
            Ok(v) => per_task.push((record.task_id.clone(), clamp_unit(v))),
            Err(e) => errors.push((record.task_id.clone(), e.to_string())),
        }
    }
    ImageQualityReport {
        mean: mean(per_task.iter().map(|(_, v)| *v)),
        participating: per_task.len(),
        records_total: records.len(),
        per_task,
        errors,
    }
}
