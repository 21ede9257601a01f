//! Pulling a runnable script out of a model completion.

use super::prompts::CODE_PREAMBLE;
use super::{PipelineError, ScriptOrigin, ScriptSource};

const FENCE: &str = "```";

/// True when the rest of an opening fence line is a language tag rather
/// than code (models sometimes write ```import ... on one line).
fn is_language_tag(s: &str) -> bool {
    let s = s.trim();
    !s.contains(' ')
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.' | '_' | '#'))
}

fn fenced_body(text: &str) -> Option<&str> {
    let open = text.find(FENCE)?;
    let after = &text[open + FENCE.len()..];
    let fence_count = text.matches(FENCE).count();
    // A completion continuing our own opening fence has code first and
    // only a closing fence after it.
    if fence_count == 1 && !text[..open].trim().is_empty() {
        return Some(&text[..open]);
    }
    let (first_line, rest) = after.split_once('\n').unwrap_or((after, ""));
    let body_start = if is_language_tag(first_line) {
        rest
    } else {
        after
    };
    Some(match body_start.find(FENCE) {
        Some(close) => &body_start[..close],
        None => body_start,
    })
}

fn strip_trailing_fences(text: &str) -> &str {
    let mut s = text.trim_end();
    while let Some(stripped) = s.strip_suffix(FENCE) {
        s = stripped.trim_end();
    }
    s
}

/// The first fenced block of `completion` (or the whole text), with any of
/// the three preamble imports that are missing prepended.
pub fn extract_code(completion: &str, origin: ScriptOrigin) -> Result<ScriptSource, PipelineError> {
    let body = fenced_body(completion).unwrap_or(completion);
    let body = strip_trailing_fences(body);
    if body.trim().is_empty() {
        return Err(PipelineError::EmptyCode);
    }
    let body = body.trim_matches('\n');
    let missing: Vec<&str> = CODE_PREAMBLE
        .iter()
        .copied()
        .filter(|import| !body.lines().any(|l| l.trim() == *import))
        .collect();
    let code = if missing.is_empty() {
        body.to_string()
    } else {
        format!("{}\n{body}", missing.join("\n"))
    };
    Ok(ScriptSource { code, origin })
}
