//! Table renderers. Every table is a pure view over pipeline records, the
//! task set and (for judge tables) stored verdicts, so rendering the same
//! inputs twice gives identical bytes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CategoryLabel, TaskSet};
use crate::judge::{AuditOutcome, AuditSummary, PerceptualSummary};
use crate::metrics::{
    error_ratio, image_quality_suite, iteration_fix_counts, similarity_suite, CategoryLookup, CodeBleuParams,
    MeteorParams, MetricError, RatioCell, SsimParams,
};
use crate::pipeline::PipelineRecord;
use crate::sandbox::error_histogram;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("missing inputs: {0}")]
    MissingInputs(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("csv output: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableKind {
    Error,
    Similarity,
    Image,
    Iterations,
    ErrorsTopk,
    Audit,
}

impl TableKind {
    pub const ALL: [TableKind; 6] = [
        TableKind::Error,
        TableKind::Similarity,
        TableKind::Image,
        TableKind::Iterations,
        TableKind::ErrorsTopk,
        TableKind::Audit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TableKind::Error => "error",
            TableKind::Similarity => "similarity",
            TableKind::Image => "image",
            TableKind::Iterations => "iterations",
            TableKind::ErrorsTopk => "errors-topk",
            TableKind::Audit => "audit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(title: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            title: title.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn cell(&self, row: usize, column: &str) -> Option<&str> {
        let c = self.columns.iter().position(|h| h == column)?;
        self.rows.get(row)?.get(c).map(String::as_str)
    }

    pub fn to_csv(&self) -> Result<String, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(|e| ReportError::Csv(e.to_string()))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| ReportError::Csv(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| ReportError::Csv(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table serializes");
        s.push('\n');
        s
    }
}

/// A column of the error table: a header and the categories it pools.
struct ErrorColumn {
    header: &'static str,
    members: &'static [CategoryLabel],
}

const T2C31_COLUMNS: [ErrorColumn; 4] = [
    ErrorColumn {
        header: "Pairwise",
        members: &[CategoryLabel::Pairwise],
    },
    ErrorColumn {
        header: "Statistical distribution",
        members: &[CategoryLabel::StatisticalDistribution],
    },
    ErrorColumn {
        header: "(Irregularly) gridded",
        members: &[CategoryLabel::Gridded, CategoryLabel::IrregularlyGridded],
    },
    ErrorColumn {
        header: "3D and Volumetric",
        members: &[CategoryLabel::ThreeDVolumetric],
    },
];

const CHARTX_COLUMNS: [ErrorColumn; 3] = [
    ErrorColumn {
        header: "General",
        members: &[CategoryLabel::General],
    },
    ErrorColumn {
        header: "Fine-grained",
        members: &[CategoryLabel::FineGrained],
    },
    ErrorColumn {
        header: "Specific",
        members: &[CategoryLabel::Specific],
    },
];

const UNKNOWN_COLUMN: ErrorColumn = ErrorColumn {
    header: "Unknown",
    members: &[CategoryLabel::Unknown],
};

fn fixed3(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

/// Error ratio (%) per category and in total, one row labelled `label`.
/// Text2Chart31 columns appear when any of its categories is present,
/// likewise for ChartX.
pub fn error_table(label: &str, records: &[PipelineRecord], tasks: &impl CategoryLookup) -> Result<Table, ReportError> {
    let ratios = error_ratio(records, tasks)?;
    let present = |pred: fn(CategoryLabel) -> bool| ratios.per_category.keys().any(|c| pred(*c));
    let mut columns: Vec<&ErrorColumn> = Vec::new();
    let chartx = present(CategoryLabel::is_chartx);
    if present(CategoryLabel::is_text2chart31) || !chartx {
        columns.extend(T2C31_COLUMNS.iter());
    }
    if chartx {
        columns.extend(CHARTX_COLUMNS.iter());
    }
    if ratios.per_category.contains_key(&CategoryLabel::Unknown) {
        columns.push(&UNKNOWN_COLUMN);
    }
    let mut headers = vec!["Method"];
    headers.extend(columns.iter().map(|c| c.header));
    headers.push("Total");
    let mut table = Table::new("Error ratio (%)", &headers);
    let mut row = vec![label.to_string()];
    for col in &columns {
        let pooled = col
            .members
            .iter()
            .fold(RatioCell::default(), |acc, c| acc.merge(ratios.cell(*c)));
        row.push(pooled.render());
    }
    row.push(ratios.overall.render());
    table.rows.push(row);
    Ok(table)
}

/// Records fixed at each repair iteration, columns 1..=max.
pub fn iterations_table(label: &str, records: &[PipelineRecord], max_iterations: u32) -> Table {
    let counts = iteration_fix_counts(records);
    let max = counts.keys().copied().max().unwrap_or(0).max(max_iterations);
    let names: Vec<String> = (1..=max).map(|k| k.to_string()).collect();
    let mut headers = vec!["Method"];
    headers.extend(names.iter().map(String::as_str));
    let mut table = Table::new("Records fixed per repair iteration", &headers);
    let mut row = vec![label.to_string()];
    row.extend((1..=max).map(|k| counts.get(&k).copied().unwrap_or(0).to_string()));
    table.rows.push(row);
    table
}

/// The `k` most frequent error kinds among attempts at `attempt_index`
/// (0 is the draft, whose errors feed the first repair iteration).
pub fn errors_topk_table(records: &[PipelineRecord], attempt_index: usize, k: usize) -> Table {
    let mut table = Table::new(
        format!("Most frequent errors at attempt {attempt_index}"),
        &["Rank", "Error", "Count", "Example"],
    );
    for (rank, entry) in error_histogram(records, attempt_index).into_iter().take(k).enumerate() {
        table.rows.push(vec![
            (rank + 1).to_string(),
            entry.kind.to_string(),
            entry.count.to_string(),
            entry.example,
        ]);
    }
    table
}

fn require_reference_code(tasks: &TaskSet) -> Result<(), ReportError> {
    if tasks.tasks.iter().any(|t| t.reference_code.is_some()) {
        Ok(())
    } else {
        Err(ReportError::MissingInputs("no task carries reference code".into()))
    }
}

fn require_reference_images(tasks: &TaskSet) -> Result<(), ReportError> {
    if tasks.tasks.iter().any(|t| t.reference_image.is_some()) {
        Ok(())
    } else {
        Err(ReportError::MissingInputs("no task carries a reference image".into()))
    }
}

/// Mean METEOR and CodeBLEU of final scripts against reference scripts.
pub fn similarity_table(label: &str, records: &[PipelineRecord], tasks: &TaskSet) -> Result<Table, ReportError> {
    require_reference_code(tasks)?;
    let report = similarity_suite(records, tasks, &MeteorParams::default(), &CodeBleuParams::default());
    let mut table = Table::new("Code similarity", &["Method", "METEOR", "CodeBLEU", "Pairs"]);
    table.rows.push(vec![
        label.to_string(),
        fixed3(report.mean_meteor),
        fixed3(report.mean_codebleu),
        report.rows.len().to_string(),
    ]);
    Ok(table)
}

/// Per-task similarity rows with every CodeBLEU component.
pub fn similarity_detail_table(records: &[PipelineRecord], tasks: &TaskSet) -> Result<Table, ReportError> {
    require_reference_code(tasks)?;
    let report = similarity_suite(records, tasks, &MeteorParams::default(), &CodeBleuParams::default());
    let mut table = Table::new(
        "Code similarity per task",
        &["Task", "METEOR", "CodeBLEU", "N-gram", "Weighted n-gram", "Syntax", "Dataflow", "Parsed"],
    );
    for r in report.rows {
        let c = r.codebleu;
        table.rows.push(vec![
            r.task_id,
            format!("{:.3}", r.meteor),
            format!("{:.3}", c.score),
            format!("{:.3}", c.ngram),
            format!("{:.3}", c.weighted_ngram),
            format!("{:.3}", c.syntax_match),
            format!("{:.3}", c.dataflow_match),
            c.parsed.to_string(),
        ]);
    }
    Ok(table)
}

/// Mean SSIM and, when verdicts are supplied, mean perceptual score.
pub fn image_table(
    label: &str,
    records: &[PipelineRecord],
    tasks: &TaskSet,
    perceptual: Option<&PerceptualSummary>,
) -> Result<Table, ReportError> {
    require_reference_images(tasks)?;
    let q = image_quality_suite(records, tasks, &SsimParams::default());
    let mut table = Table::new("Image quality", &["Method", "SSIM", "SSIM pairs", "Perceptual", "Judged pairs"]);
    table.rows.push(vec![
        label.to_string(),
        fixed3(q.mean),
        q.participating.to_string(),
        perceptual.and_then(|p| p.mean).map_or_else(|| "n/a".into(), |m| format!("{m:.1}")),
        perceptual.map_or(0, |p| p.participating).to_string(),
    ]);
    Ok(table)
}

/// Per-task SSIM rows.
pub fn image_detail_table(records: &[PipelineRecord], tasks: &TaskSet) -> Result<Table, ReportError> {
    require_reference_images(tasks)?;
    let q = image_quality_suite(records, tasks, &SsimParams::default());
    let mut table = Table::new("SSIM per task", &["Task", "SSIM"]);
    for (id, v) in q.per_task {
        table.rows.push(vec![id, format!("{v:.3}")]);
    }
    Ok(table)
}

/// Colour-vision audit pass rate.
pub fn audit_table(label: &str, audit: Option<&AuditSummary>) -> Result<Table, ReportError> {
    let audit = audit.ok_or_else(|| ReportError::MissingInputs("run has no audit verdicts".into()))?;
    let unscored = audit
        .entries
        .iter()
        .filter(|e| matches!(e.outcome, AuditOutcome::Unscored { .. }))
        .count();
    let mut table = Table::new(
        "Colour-vision accessibility",
        &["Method", "Appropriate", "Judged", "Unscored", "Pass rate (%)"],
    );
    table.rows.push(vec![
        label.to_string(),
        audit.appropriate.to_string(),
        audit.participating.to_string(),
        unscored.to_string(),
        audit.pass_rate().unwrap_or_else(|| "n/a".into()),
    ]);
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::FinalStatus;
    use std::collections::BTreeMap;

    fn record(id: &str, status: FinalStatus) -> PipelineRecord {
        PipelineRecord {
            task_id: id.into(),
            category: CategoryLabel::Unknown,
            draft: None,
            attempts: vec![],
            final_status: status,
            suggestions: vec![],
            error: None,
        }
    }

    #[test]
    fn gridded_columns_pool() {
        let lookup: BTreeMap<String, CategoryLabel> = [
            ("a".to_string(), CategoryLabel::Gridded),
            ("b".to_string(), CategoryLabel::IrregularlyGridded),
            ("c".to_string(), CategoryLabel::Pairwise),
        ]
        .into();
        let records = vec![
            record("a", FinalStatus::Failed),
            record("b", FinalStatus::Success { iteration_fixed: 0 }),
            record("c", FinalStatus::Success { iteration_fixed: 0 }),
        ];
        let t = error_table("x", &records, &lookup).unwrap();
        assert_eq!(t.cell(0, "(Irregularly) gridded"), Some("50.00"));
        assert_eq!(t.cell(0, "Pairwise"), Some("0.00"));
        assert_eq!(t.cell(0, "Statistical distribution"), Some("n/a"));
        assert_eq!(t.cell(0, "Total"), Some("33.33"));
        assert_eq!(t.cell(0, "General"), None);
    }

    #[test]
    fn chartx_columns_only_for_chartx() {
        let lookup: BTreeMap<String, CategoryLabel> = [("a".to_string(), CategoryLabel::Specific)].into();
        let t = error_table("x", &[record("a", FinalStatus::Failed)], &lookup).unwrap();
        assert_eq!(t.columns, vec!["Method", "General", "Fine-grained", "Specific", "Total"]);
        assert_eq!(t.cell(0, "Specific"), Some("100.00"));
    }

    #[test]
    fn iterations_fill_missing_columns() {
        let records = vec![record("a", FinalStatus::Success { iteration_fixed: 2 })];
        let t = iterations_table("x", &records, 3);
        assert_eq!(t.columns, vec!["Method", "1", "2", "3"]);
        assert_eq!(t.rows[0], vec!["x", "0", "1", "0"]);
    }

    #[test]
    fn csv_quotes_commas() {
        let mut t = Table::new("t", &["a", "b"]);
        t.rows.push(vec!["x, y".into(), "z".into()]);
        assert_eq!(t.to_csv().unwrap(), "a,b\n\"x, y\",z\n");
    }

    #[test]
    fn missing_inputs() {
        let tasks = TaskSet::new("empty", vec![]);
        assert!(matches!(similarity_table("x", &[], &tasks), Err(ReportError::MissingInputs(_))));
        assert!(matches!(image_table("x", &[], &tasks, None), Err(ReportError::MissingInputs(_))));
        assert!(matches!(audit_table("x", None), Err(ReportError::MissingInputs(_))));
    }
}
