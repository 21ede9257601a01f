//! Multimodal LLM judging: a perceptual score for a generated chart against
//! its reference, and a colour-vision accessibility audit of a single chart.
//!
//! Completions are parsed leniently (the JSON object may be surrounded by
//! prose) but strictly in content: scores outside 0..=100 and judgments
//! outside the two allowed strings are errors.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::TaskSet;
use crate::gateway::{complete, ChatMessage, ChatRequest, ContentPart, GatewayError, ProviderHandle, Role};
use crate::metrics::decode_png;
use crate::pipeline::PipelineRecord;

pub const PERCEPTUAL_SYSTEM_PROMPT: &str = "For two shown images, the human perceptual quality score of the first image is 50.
Based on this example, assign a perceptual quality score to the second image in terms of perceptual similarity.
The score must range from 0 to 100, with a higher score denoting better image quality.
Return the result as a JSON object in this format: {\"score\": <integer>}.";

pub const COLORBLIND_SYSTEM_PROMPT: &str = "You will be given a data-visualization (image). Decide whether the visualization is appropriate for viewers with color-vision deficiencies.
How to judge:
1. Do not rely on hue alone. Look for additional cues such as shapes, icons, text labels, patterns, or distinct light-dark contrasts.
2. Avoid problem pairs. Red + green, red + brown, green + brown, purple + blue, and pink + turquoise of similar lightness are hard to tell apart.
3. Prefer safe palettes. Blue vs. orange/red, or any two colors that differ clearly in lightness, usually work well.
Check gradients. Gradients should vary in lightness, not just hue.
Overall clarity. Annotations, legends, and labels must still be readable when colors are altered by common forms of color-blindness.
Output format: Just return \"Appropriate\" or \"Not appropriate\", do NOT return anything else.
Return the result as a JSON object in this format: {\"Judgment\": <string>}.";

pub const PERCEPTUAL_REMINDER: &str =
    "Your previous reply could not be read. Reply with only a JSON object in this format: {\"score\": <integer>}.";
pub const COLORBLIND_REMINDER: &str = "Your previous reply could not be read. Reply with only a JSON object in this format: {\"Judgment\": \"Appropriate\"} or {\"Judgment\": \"Not appropriate\"}.";

const SCORE_KEY: &str = "score";
const JUDGMENT_KEY: &str = "Judgment";

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge reply not usable ({reason}): {raw:?}")]
    Format { reason: String, raw: String },
    #[error("image is not a decodable PNG: {0}")]
    InvalidImage(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerceptualVerdict {
    pub score: u8,
    pub raw_completion: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Judgment {
    Appropriate,
    NotAppropriate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessibilityVerdict {
    pub judgment: Judgment,
    pub raw_completion: String,
}

/// Why a completion could not be turned into a verdict. Only `Missing`
/// earns the format-reminder retry; the other two are answers in the right
/// shape with unusable content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum ParseFailure {
    Missing(String),
    Invalid(String),
    Conflicting,
}

impl ParseFailure {
    fn reason(&self) -> String {
        match self {
            ParseFailure::Missing(r) | ParseFailure::Invalid(r) => r.clone(),
            ParseFailure::Conflicting => "conflicting JSON objects".into(),
        }
    }
}

/// Top-level JSON objects embedded in `text`, in order.
pub(crate) fn embedded_objects(text: &str) -> Vec<serde_json::Map<String, Value>> {
    let mut out = Vec::new();
    let mut pos = 0;
    while let Some(offset) = text[pos..].find('{') {
        let start = pos + offset;
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => {
                out.push(map);
                pos = start + stream.byte_offset();
            }
            _ => pos = start + 1,
        }
    }
    out
}

/// The single value under `key` across all embedded objects. Repeats of the
/// same value are tolerated, differing values are not.
fn keyed_value(text: &str, key: &str) -> Result<Value, ParseFailure> {
    let mut found: Option<Value> = None;
    for obj in embedded_objects(text) {
        if let Some(v) = obj.get(key) {
            match &found {
                Some(prev) if prev != v => return Err(ParseFailure::Conflicting),
                Some(_) => {}
                None => found = Some(v.clone()),
            }
        }
    }
    found.ok_or_else(|| ParseFailure::Missing(format!("no JSON object with key `{key}`")))
}

pub(crate) fn parse_score(text: &str) -> Result<u8, ParseFailure> {
    let value = keyed_value(text, SCORE_KEY)?;
    let Some(n) = value.as_i64() else {
        return Err(ParseFailure::Missing(format!("score {value} is not an integer")));
    };
    u8::try_from(n)
        .ok()
        .filter(|s| *s <= 100)
        .ok_or_else(|| ParseFailure::Invalid(format!("score {n} outside 0..=100")))
}

fn judgment_from_str(s: &str) -> Option<Judgment> {
    match s.trim() {
        "Appropriate" => Some(Judgment::Appropriate),
        "Not appropriate" => Some(Judgment::NotAppropriate),
        _ => None,
    }
}

pub(crate) fn parse_judgment(text: &str) -> Result<Judgment, ParseFailure> {
    match keyed_value(text, JUDGMENT_KEY) {
        Ok(Value::String(s)) => {
            judgment_from_str(&s).ok_or_else(|| ParseFailure::Invalid(format!("judgment {s:?} not allowed")))
        }
        Ok(other) => Err(ParseFailure::Invalid(format!("judgment {other} is not a string"))),
        // The prompt also asks for the bare string, so accept exactly that.
        Err(ParseFailure::Missing(reason)) => judgment_from_str(text).ok_or(ParseFailure::Missing(reason)),
        Err(e) => Err(e),
    }
}

fn check_png(bytes: &[u8]) -> Result<(), JudgeError> {
    decode_png(bytes).map(|_| ()).map_err(|e| JudgeError::InvalidImage(e.to_string()))
}

fn image_message(images: &[&[u8]]) -> ChatMessage {
    ChatMessage {
        role: Role::User,
        content: images.iter().map(|b| ContentPart::png(b)).collect(),
    }
}

/// Reference image first, generated image second.
pub fn perceptual_request(reference: &[u8], generated: &[u8], model: &str) -> ChatRequest {
    ChatRequest::new(
        model,
        vec![ChatMessage::system(PERCEPTUAL_SYSTEM_PROMPT), image_message(&[reference, generated])],
    )
}

pub fn colorblind_request(image: &[u8], model: &str) -> ChatRequest {
    ChatRequest::new(model, vec![ChatMessage::system(COLORBLIND_SYSTEM_PROMPT), image_message(&[image])])
}

/// Sends `request`, and once more with the reply and `reminder` appended when
/// the first reply has no usable object.
fn ask_with_retry<T>(
    request: ChatRequest,
    reminder: &str,
    provider: &ProviderHandle,
    parse: impl Fn(&str) -> Result<T, ParseFailure>,
) -> Result<(T, String), JudgeError> {
    let first = complete(&request, provider)?.text;
    match parse(&first) {
        Ok(v) => return Ok((v, first)),
        Err(ParseFailure::Missing(reason)) => log::debug!("judge reply unusable ({reason}), retrying"),
        Err(e) => return Err(JudgeError::Format { reason: e.reason(), raw: first }),
    }
    let mut retry = request;
    retry.messages.push(ChatMessage::assistant(first));
    retry.messages.push(ChatMessage::user(reminder));
    let second = complete(&retry, provider)?.text;
    match parse(&second) {
        Ok(v) => Ok((v, second)),
        Err(e) => Err(JudgeError::Format { reason: e.reason(), raw: second }),
    }
}

pub fn perceptual_score(
    reference: &[u8],
    generated: &[u8],
    provider: &ProviderHandle,
    model: &str,
) -> Result<PerceptualVerdict, JudgeError> {
    perceptual_score_tagged(reference, generated, provider, model, None)
}

/// As [`perceptual_score`], with a request tag (the task id in suites).
pub fn perceptual_score_tagged(
    reference: &[u8],
    generated: &[u8],
    provider: &ProviderHandle,
    model: &str,
    tag: Option<&str>,
) -> Result<PerceptualVerdict, JudgeError> {
    check_png(reference)?;
    check_png(generated)?;
    let mut request = perceptual_request(reference, generated, model);
    request.tag = tag.map(str::to_string);
    let (score, raw_completion) = ask_with_retry(request, PERCEPTUAL_REMINDER, provider, parse_score)?;
    Ok(PerceptualVerdict { score, raw_completion })
}

pub fn colorblind_audit(image: &[u8], provider: &ProviderHandle, model: &str) -> Result<AccessibilityVerdict, JudgeError> {
    colorblind_audit_tagged(image, provider, model, None)
}

pub fn colorblind_audit_tagged(
    image: &[u8],
    provider: &ProviderHandle,
    model: &str,
    tag: Option<&str>,
) -> Result<AccessibilityVerdict, JudgeError> {
    check_png(image)?;
    let mut request = colorblind_request(image, model);
    request.tag = tag.map(str::to_string);
    let (judgment, raw_completion) = ask_with_retry(request, COLORBLIND_REMINDER, provider, parse_judgment)?;
    Ok(AccessibilityVerdict {
        judgment,
        raw_completion,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum AuditOutcome {
    Appropriate,
    NotAppropriate,
    Unscored { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub task_id: String,
    #[serde(flatten)]
    pub outcome: AuditOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub entries: Vec<AuditEntry>,
    pub appropriate: usize,
    /// Records with an image whose verdict parsed.
    pub participating: usize,
}

impl AuditSummary {
    pub fn from_entries(entries: Vec<AuditEntry>) -> Self {
        let appropriate = entries.iter().filter(|e| e.outcome == AuditOutcome::Appropriate).count();
        let participating = entries
            .iter()
            .filter(|e| !matches!(e.outcome, AuditOutcome::Unscored { .. }))
            .count();
        Self {
            entries,
            appropriate,
            participating,
        }
    }

    /// Pass rate in tenths of a percent, rounded half up.
    pub fn pass_rate_tenths(&self) -> Option<u64> {
        if self.participating == 0 {
            return None;
        }
        let (a, p) = (self.appropriate as u64, self.participating as u64);
        Some((a * 2000 + p) / (2 * p))
    }

    /// One-decimal percentage, absent with no participants.
    pub fn pass_rate(&self) -> Option<String> {
        self.pass_rate_tenths().map(|t| format!("{}.{}", t / 10, t % 10))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptualEntry {
    pub task_id: String,
    /// Absent when the judge failed; `reason` says why.
    pub score: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptualSummary {
    pub entries: Vec<PerceptualEntry>,
    pub mean: Option<f64>,
    pub participating: usize,
}

impl PerceptualSummary {
    pub fn from_entries(entries: Vec<PerceptualEntry>) -> Self {
        let scores: Vec<f64> = entries.iter().filter_map(|e| e.score.map(f64::from)).collect();
        Self {
            mean: (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64),
            participating: scores.len(),
            entries,
        }
    }
}

/// Order-preserving map over `items` on at most `workers` threads.
fn parallel_map<I: Sync, O: Send>(items: &[I], workers: usize, f: impl Fn(&I) -> O + Sync) -> Vec<O> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<O>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    thread::scope(|scope| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                let out = f(item);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|o| o.expect("every slot filled"))
        .collect()
}

/// Colour-vision audit of every record that produced an image.
pub fn audit_suite(records: &[PipelineRecord], provider: &ProviderHandle, model: &str, workers: usize) -> AuditSummary {
    let with_images: Vec<(&str, &[u8])> = records
        .iter()
        .filter_map(|r| r.final_image().map(|img| (r.task_id.as_str(), img)))
        .collect();
    let entries = parallel_map(&with_images, workers, |(id, img)| {
        let outcome = match colorblind_audit_tagged(img, provider, model, Some(id)) {
            Ok(v) => match v.judgment {
                Judgment::Appropriate => AuditOutcome::Appropriate,
                Judgment::NotAppropriate => AuditOutcome::NotAppropriate,
            },
            Err(e) => {
                log::warn!("audit of {id} unscored: {e}");
                AuditOutcome::Unscored { reason: e.to_string() }
            }
        };
        AuditEntry {
            task_id: id.to_string(),
            outcome,
        }
    });
    AuditSummary::from_entries(entries)
}

/// Perceptual score of every produced image whose task has a reference image.
pub fn perceptual_suite(
    records: &[PipelineRecord],
    tasks: &TaskSet,
    provider: &ProviderHandle,
    model: &str,
    workers: usize,
) -> PerceptualSummary {
    let pairs: Vec<(&str, &[u8], &[u8])> = records
        .iter()
        .filter_map(|r| {
            let generated = r.final_image()?;
            let reference = tasks.get(&r.task_id)?.reference_image.as_deref()?;
            Some((r.task_id.as_str(), reference, generated))
        })
        .collect();
    let entries = parallel_map(&pairs, workers, |(id, reference, generated)| {
        match perceptual_score_tagged(reference, generated, provider, model, Some(id)) {
            Ok(v) => PerceptualEntry {
                task_id: id.to_string(),
                score: Some(v.score),
                reason: None,
            },
            Err(e) => {
                log::warn!("perceptual score of {id} unscored: {e}");
                PerceptualEntry {
                    task_id: id.to_string(),
                    score: None,
                    reason: Some(e.to_string()),
                }
            }
        }
    });
    PerceptualSummary::from_entries(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{mock_provider, MockReply};
    use crate::sandbox::synthetic_png;

    fn png() -> Vec<u8> {
        synthetic_png(b"one")
    }

    #[test]
    fn embedded_objects_skip_prose_and_nesting() {
        let objs = embedded_objects("Sure! {\"score\": 3, \"extra\": {\"score\": 9}} and {bad json} then {\"a\": 1}");
        assert_eq!(objs.len(), 2);
        assert_eq!(objs[0]["score"], 3);
        assert_eq!(objs[1]["a"], 1);
    }

    #[test]
    fn score_parsing() {
        assert_eq!(parse_score("{\"score\": 67}"), Ok(67));
        assert_eq!(parse_score("I think {\"score\": 0} fits."), Ok(0));
        assert_eq!(parse_score("{\"score\": 100}"), Ok(100));
        assert!(matches!(parse_score("{\"score\": 101}"), Err(ParseFailure::Invalid(_))));
        assert!(matches!(parse_score("{\"score\": -1}"), Err(ParseFailure::Invalid(_))));
        assert!(matches!(parse_score("Score: 80"), Err(ParseFailure::Missing(_))));
        assert!(matches!(parse_score("{\"score\": 7.5}"), Err(ParseFailure::Missing(_))));
        assert_eq!(parse_score("{\"score\": 5} {\"score\": 5}"), Ok(5));
        assert_eq!(parse_score("{\"score\": 5} {\"score\": 6}"), Err(ParseFailure::Conflicting));
    }

    #[test]
    fn judgment_parsing() {
        assert_eq!(parse_judgment("{\"Judgment\": \"Appropriate\"}"), Ok(Judgment::Appropriate));
        assert_eq!(parse_judgment("{\"Judgment\": \" Not appropriate \"}"), Ok(Judgment::NotAppropriate));
        assert_eq!(parse_judgment("Not appropriate"), Ok(Judgment::NotAppropriate));
        assert!(matches!(parse_judgment("{\"Judgment\": \"maybe\"}"), Err(ParseFailure::Invalid(_))));
        assert!(matches!(parse_judgment("{\"Judgment\": \"appropriate\"}"), Err(ParseFailure::Invalid(_))));
        assert!(matches!(parse_judgment("it looks fine"), Err(ParseFailure::Missing(_))));
    }

    #[test]
    fn perceptual_request_puts_reference_first() {
        let reference = synthetic_png(b"one");
        let generated = synthetic_png(b"two");
        let req = perceptual_request(&reference, &generated, "m");
        assert_eq!(req.messages[0].text(), PERCEPTUAL_SYSTEM_PROMPT);
        assert_eq!(req.messages[1].content, vec![ContentPart::png(&reference), ContentPart::png(&generated)]);
        assert_eq!(req.temperature, 0.0);
        assert_eq!(req, perceptual_request(&reference, &generated, "m"));
    }

    #[test]
    fn retry_then_success() {
        let p = mock_provider(vec![MockReply::text("Score: 80"), MockReply::text("{\"score\": 80}")]);
        let v = perceptual_score(&png(), &png(), &p, "m").unwrap();
        assert_eq!(v.score, 80);
    }

    #[test]
    fn out_of_range_is_not_retried() {
        let p = mock_provider(vec![MockReply::text("{\"score\": 150}"), MockReply::text("{\"score\": 50}")]);
        assert!(matches!(perceptual_score(&png(), &png(), &p, "m"), Err(JudgeError::Format { .. })));
    }

    #[test]
    fn two_bad_replies_fail() {
        let p = mock_provider(vec![MockReply::text("eighty"), MockReply::text("still eighty")]);
        assert!(matches!(perceptual_score(&png(), &png(), &p, "m"), Err(JudgeError::Format { .. })));
    }

    #[test]
    fn undecodable_image_rejected() {
        let p = mock_provider(vec![]);
        assert!(matches!(colorblind_audit(b"nope", &p, "m"), Err(JudgeError::InvalidImage(_))));
    }

    #[test]
    fn pass_rate_rendering() {
        let entry = |o: AuditOutcome| AuditEntry {
            task_id: "t".into(),
            outcome: o,
        };
        let s = AuditSummary::from_entries(vec![
            entry(AuditOutcome::Appropriate),
            entry(AuditOutcome::NotAppropriate),
            entry(AuditOutcome::NotAppropriate),
            entry(AuditOutcome::Unscored { reason: "x".into() }),
        ]);
        assert_eq!(s.participating, 3);
        assert_eq!(s.pass_rate().as_deref(), Some("33.3"));
        assert_eq!(AuditSummary::from_entries(vec![]).pass_rate(), None);
        let all = AuditSummary::from_entries(vec![entry(AuditOutcome::Appropriate)]);
        assert_eq!(all.pass_rate().as_deref(), Some("100.0"));
    }
}
