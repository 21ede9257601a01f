//! Traceback signatures and per-attempt error histograms.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TIMEOUT_MARKER;
use crate::pipeline::PipelineRecord;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot classify an empty traceback")]
pub struct ClassifyError;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorKind {
    MissingModule { name: String },
    BadKeywordArgument { callee: String, kwarg: String },
    NameUndefined { name: String },
    ShapeMismatch,
    LengthMismatch,
    FileNotFound { name: String },
    SyntaxError,
    Timeout,
    Other,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorKind::MissingModule { name } => write!(f, "MissingModule({name})"),
            ErrorKind::BadKeywordArgument { callee, kwarg } => {
                write!(f, "BadKeywordArgument({callee}, {kwarg})")
            }
            ErrorKind::NameUndefined { name } => write!(f, "NameUndefined({name})"),
            ErrorKind::ShapeMismatch => f.write_str("ShapeMismatch"),
            ErrorKind::LengthMismatch => f.write_str("LengthMismatch"),
            ErrorKind::FileNotFound { name } => write!(f, "FileNotFound({name})"),
            ErrorKind::SyntaxError => f.write_str("SyntaxError"),
            ErrorKind::Timeout => f.write_str("Timeout"),
            ErrorKind::Other => f.write_str("Other"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorSignature {
    pub kind: ErrorKind,
    /// The terminal exception line.
    pub message_head: String,
}

/// `pkg.mod.SomeError: ...` or a bare `SomeError` at column zero.
fn is_exception_line(line: &str) -> bool {
    if line.starts_with(char::is_whitespace) {
        return false;
    }
    let head = line.split_once(':').map_or(line, |(h, _)| h).trim_end();
    if head.is_empty() || (!line.contains(':') && !head.ends_with("Error") && !head.ends_with("Exception")) {
        return false;
    }
    head.split('.').all(|part| {
        let mut chars = part.chars();
        chars
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
    })
}

fn terminal_line(traceback: &str) -> &str {
    let lines: Vec<&str> = traceback.lines().filter(|l| !l.trim().is_empty()).collect();
    lines
        .iter()
        .rev()
        .find(|l| is_exception_line(l))
        .or(lines.last())
        .map_or("", |l| l.trim())
}

fn strip_quotes(s: &str) -> String {
    s.trim()
        .trim_matches(|c| matches!(c, '\'' | '"' | '`' | '\u{201c}' | '\u{201d}'))
        .to_string()
}

/// First quoted token after `marker`, or the next whitespace-delimited word.
fn quoted_after(line: &str, marker: &str) -> Option<String> {
    let rest = &line[line.find(marker)? + marker.len()..];
    let rest = rest.trim_start();
    let mut chars = rest.chars();
    let name = match chars.next()? {
        q @ ('\'' | '"') => rest[1..].split(q).next()?.to_string(),
        _ => rest.split_whitespace().next()?.to_string(),
    };
    let name = strip_quotes(&name);
    (!name.is_empty()).then_some(name)
}

fn bad_keyword(line: &str) -> Option<ErrorKind> {
    const MARKER: &str = "got an unexpected keyword argument";
    let idx = line.find(MARKER)?;
    let kwarg = quoted_after(line, MARKER).unwrap_or_default();
    let before = line[..idx].trim_end();
    let before = before.strip_suffix("()").unwrap_or(before);
    let callee = before
        .rsplit(|c: char| !(c.is_alphanumeric() || c == '_' || c == '.'))
        .next()
        .unwrap_or("")
        .rsplit('.')
        .next()
        .unwrap_or("")
        .to_string();
    Some(ErrorKind::BadKeywordArgument { callee, kwarg })
}

/// Maps a traceback to its signature by looking at the terminal exception
/// line. Total over non-empty input; unknown shapes become `Other`.
pub fn classify_error(traceback: &str) -> Result<ErrorSignature, ClassifyError> {
    if traceback.trim().is_empty() {
        return Err(ClassifyError);
    }
    let line = terminal_line(traceback);
    let exc_type = line
        .split_once(':')
        .map_or(line, |(h, _)| h)
        .rsplit('.')
        .next()
        .unwrap_or("")
        .trim();
    let kind = if line.starts_with(TIMEOUT_MARKER) {
        ErrorKind::Timeout
    } else if line.contains("No module named") {
        ErrorKind::MissingModule {
            name: quoted_after(line, "No module named").unwrap_or_default(),
        }
    } else if let Some(kind) = bad_keyword(line) {
        kind
    } else if let (Some(name), true) = (quoted_after(line, "name "), line.contains("is not defined")) {
        ErrorKind::NameUndefined { name }
    } else if line.contains("must be 2-dimensional") {
        ErrorKind::ShapeMismatch
    } else if line.contains("All arrays must be of the same length") {
        ErrorKind::LengthMismatch
    } else if line.contains("No such file or directory") {
        let name = line
            .rsplit_once("No such file or directory:")
            .map(|(_, n)| strip_quotes(n))
            .unwrap_or_default();
        ErrorKind::FileNotFound { name }
    } else if matches!(exc_type, "SyntaxError" | "IndentationError" | "TabError") {
        ErrorKind::SyntaxError
    } else {
        ErrorKind::Other
    };
    Ok(ErrorSignature {
        kind,
        message_head: line.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramEntry {
    pub kind: ErrorKind,
    pub count: usize,
    /// Terminal line of the first traceback seen for this kind.
    pub example: String,
}

/// Counts signatures of failed attempts at `attempt_index` (0 is the draft).
/// Records without such an attempt, or where it succeeded, are skipped.
/// Sorted by count descending, then by kind.
pub fn error_histogram(records: &[PipelineRecord], attempt_index: usize) -> Vec<HistogramEntry> {
    let mut buckets: BTreeMap<ErrorKind, (usize, String)> = BTreeMap::new();
    for record in records {
        let Some(attempt) = record.attempts.get(attempt_index) else {
            continue;
        };
        if attempt.outcome.is_success() {
            continue;
        }
        let Ok(sig) = classify_error(&attempt.outcome.error_text()) else {
            continue;
        };
        buckets
            .entry(sig.kind)
            .or_insert_with(|| (0, sig.message_head))
            .0 += 1;
    }
    let mut entries: Vec<HistogramEntry> = buckets
        .into_iter()
        .map(|(kind, (count, example))| HistogramEntry { kind, count, example })
        .collect();
    entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.kind.cmp(&b.kind)));
    entries
}
