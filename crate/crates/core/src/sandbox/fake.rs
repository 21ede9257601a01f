//! Scripted executor for hermetic tests.

use std::io::Cursor;

use serde::Deserialize;

use super::{ExecBackend, ExecutionOutcome, Limits, SandboxError, Workspace, TIMEOUT_MARKER};
use crate::pipeline::ScriptSource;

#[derive(Debug, Clone, PartialEq)]
pub enum FakeOutcome {
    /// Success. Without explicit bytes a small gray PNG derived from the
    /// code is produced, so distinct scripts yield distinct images.
    Ok(Option<Vec<u8>>),
    Raised(String),
    Timeout,
    Crashed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FakeRule {
    pub contains: String,
    pub outcome: FakeOutcome,
}

#[derive(Debug, Clone)]
pub struct FakeBackend {
    rules: Vec<FakeRule>,
    default: FakeOutcome,
}

#[derive(Deserialize)]
struct RuleJson {
    contains: String,
    status: String,
    #[serde(default)]
    traceback: Option<String>,
}

fn fnv1a(data: &[u8]) -> u64 {
    data.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// A 32×32 PNG whose pixels are a deterministic function of `seed`.
pub fn synthetic_png(seed: &[u8]) -> Vec<u8> {
    let mut state = fnv1a(seed) | 1;
    let img = image::GrayImage::from_fn(32, 32, |_, _| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        image::Luma([(state >> 56) as u8])
    });
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .expect("encoding an in-memory PNG cannot fail");
    out.into_inner()
}

impl FakeBackend {
    /// Every script gets `default`.
    pub fn new(default: FakeOutcome) -> Self {
        Self {
            rules: Vec::new(),
            default,
        }
    }

    pub fn always_ok() -> Self {
        Self::new(FakeOutcome::Ok(None))
    }

    /// Adds a rule; the first rule whose substring occurs in the code wins.
    pub fn rule(mut self, contains: impl Into<String>, outcome: FakeOutcome) -> Self {
        self.rules.push(FakeRule {
            contains: contains.into(),
            outcome,
        });
        self
    }

    /// Parses `[{"contains", "status", "traceback"}]` with status one of
    /// ok, raised, timeout, crashed. Unmatched scripts succeed.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let rules: Vec<RuleJson> = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let mut backend = Self::always_ok();
        for r in rules {
            let tb = r.traceback.unwrap_or_default();
            let outcome = match r.status.as_str() {
                "ok" => FakeOutcome::Ok(None),
                "raised" if !tb.trim().is_empty() => FakeOutcome::Raised(tb),
                "raised" => return Err(format!("rule `{}`: raised needs a traceback", r.contains)),
                "timeout" => FakeOutcome::Timeout,
                "crashed" => FakeOutcome::Crashed(tb),
                other => return Err(format!("unknown status `{other}`")),
            };
            backend = backend.rule(r.contains, outcome);
        }
        Ok(backend)
    }

    fn outcome_for(&self, code: &str) -> &FakeOutcome {
        self.rules
            .iter()
            .find(|r| code.contains(&r.contains))
            .map_or(&self.default, |r| &r.outcome)
    }
}

impl ExecBackend for FakeBackend {
    fn name(&self) -> &str {
        "fake"
    }

    fn execute(
        &self,
        script: &ScriptSource,
        _ws: &Workspace,
        limits: &Limits,
    ) -> Result<ExecutionOutcome, SandboxError> {
        Ok(match self.outcome_for(&script.code) {
            FakeOutcome::Ok(Some(png)) => ExecutionOutcome::ok(png.clone(), 0.0),
            FakeOutcome::Ok(None) => ExecutionOutcome::ok(synthetic_png(script.code.as_bytes()), 0.0),
            FakeOutcome::Raised(tb) => ExecutionOutcome::raised(tb.clone(), 0.0),
            FakeOutcome::Timeout => ExecutionOutcome::timeout(
                format!(
                    "{TIMEOUT_MARKER}: script exceeded the wall timeout of {}s",
                    limits.wall_timeout().as_secs()
                ),
                limits.wall_timeout().as_secs_f64(),
            ),
            FakeOutcome::Crashed(tb) => ExecutionOutcome::crashed(tb.clone(), 0.0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::ScriptOrigin;
    use crate::sandbox::ExecStatus;

    fn run(backend: &FakeBackend, code: &str) -> ExecutionOutcome {
        let ws = Workspace::empty().unwrap();
        let s = ScriptSource {
            code: code.into(),
            origin: ScriptOrigin::Draft,
        };
        backend.execute(&s, &ws, &Limits::default()).unwrap()
    }

    #[test]
    fn scripted_png_is_returned() {
        let one_px = synthetic_png(b"x");
        let b = FakeBackend::new(FakeOutcome::Ok(Some(one_px.clone())));
        let out = run(&b, "anything");
        assert_eq!(out.status, ExecStatus::Ok);
        assert_eq!(out.image.unwrap(), one_px);
    }

    #[test]
    fn first_matching_rule_wins() {
        let b = FakeBackend::always_ok()
            .rule("BAD", FakeOutcome::Raised("NameError: name 'x' is not defined".into()))
            .rule("BAD", FakeOutcome::Timeout);
        assert_eq!(run(&b, "x = BAD").status, ExecStatus::Raised);
        assert_eq!(run(&b, "fine").status, ExecStatus::Ok);
    }

    #[test]
    fn synthetic_images_decode_and_differ() {
        let a = synthetic_png(b"a");
        let b = synthetic_png(b"b");
        assert_ne!(a, b);
        let img = image::load_from_memory(&a).unwrap();
        assert_eq!((img.width(), img.height()), (32, 32));
        assert_eq!(a, synthetic_png(b"a"));
    }

    #[test]
    fn json_rules() {
        let b = FakeBackend::from_json(
            r#"[{"contains":"boom","status":"raised","traceback":"ValueError: boom"},
                {"contains":"spin","status":"timeout"}]"#,
        )
        .unwrap();
        assert_eq!(run(&b, "boom()").traceback.as_deref(), Some("ValueError: boom"));
        assert_eq!(run(&b, "spin()").status, ExecStatus::Timeout);
        assert!(FakeBackend::from_json(r#"[{"contains":"a","status":"raised"}]"#).is_err());
        assert!(FakeBackend::from_json(r#"[{"contains":"a","status":"weird"}]"#).is_err());
    }
}
