//! Chat-completion gateway.
//!
//! Every model call in the crate goes through [`complete`], which validates
//! the request, waits for a slot in the provider's concurrency limiter and
//! applies the retry policy. Providers implement [`ChatBackend`]; the two
//! shipped ones are the OpenAI-compatible HTTP client in [`http`] and the
//! scripted [`mock::MockProvider`].

pub mod http;
pub mod mock;

use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{mock_provider, MockProvider, MockReply};

pub const DEFAULT_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 4096;
pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("authentication failed: {0}")]
    AuthFailed(String),
    #[error("request rejected with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("unexpected response: {0}")]
    Protocol(String),
    #[error("mock provider exhausted after {served} replies")]
    MockExhausted { served: usize },
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Transport(_) | GatewayError::RateLimited(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageData { media_type: String, base64: String },
}

impl ContentPart {
    pub fn text(text: impl Into<String>) -> Self {
        ContentPart::Text { text: text.into() }
    }

    pub fn png(bytes: &[u8]) -> Self {
        ContentPart::ImageData {
            media_type: "image/png".into(),
            base64: base64::engine::general_purpose::STANDARD.encode(bytes),
        }
    }

    pub fn data_url(&self) -> Option<String> {
        match self {
            ContentPart::ImageData { media_type, base64 } => {
                Some(format!("data:{media_type};base64,{base64}"))
            }
            ContentPart::Text { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: Vec<ContentPart>,
}

impl ChatMessage {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            content: vec![ContentPart::text(text)],
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self::new(Role::System, text)
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self::new(Role::User, text)
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self::new(Role::Assistant, text)
    }

    /// Concatenation of the text parts, images skipped.
    pub fn text(&self) -> String {
        self.content
            .iter()
            .filter_map(|p| match p {
                ContentPart::Text { text } => Some(text.as_str()),
                ContentPart::ImageData { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn validate(&self) -> Result<(), GatewayError> {
        if self.content.is_empty() {
            return Err(GatewayError::InvalidRequest(format!(
                "{:?} message has no content",
                self.role
            )));
        }
        for part in &self.content {
            if let ContentPart::ImageData { base64, .. } = part {
                base64::engine::general_purpose::STANDARD
                    .decode(base64)
                    .map_err(|e| GatewayError::InvalidRequest(format!("image payload: {e}")))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model_name: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Caller-side label (the task id for pipeline calls). Never sent on the
    /// wire; keyed mocks route on it and logs print it.
    pub tag: Option<String>,
}

impl ChatRequest {
    pub fn new(model_name: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            model_name: model_name.into(),
            messages,
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            tag: None,
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("request has no messages".into()));
        }
        if self
            .messages
            .iter()
            .skip(1)
            .any(|m| m.role == Role::System)
        {
            return Err(GatewayError::InvalidRequest(
                "system message must come first".into(),
            ));
        }
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(GatewayError::InvalidRequest("request has no user message".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} is negative",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_output_tokens is zero".into()));
        }
        self.messages.iter().try_for_each(ChatMessage::validate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatCompletion {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
}

impl ChatCompletion {
    /// Builds a completion, downgrading `Stop` with empty text to `Error`.
    pub fn new(text: impl Into<String>, finish_reason: FinishReason, usage: Usage) -> Self {
        let text = text.into();
        let finish_reason = if finish_reason == FinishReason::Stop && text.is_empty() {
            FinishReason::Error
        } else {
            finish_reason
        };
        Self {
            text,
            finish_reason,
            usage,
        }
    }
}

/// A model provider. Implementations must be callable from many threads.
pub trait ChatBackend: Send + Sync {
    /// Short name for logs and run manifests.
    fn name(&self) -> &str;
    /// One attempt, no retries.
    fn send(&self, request: &ChatRequest) -> Result<ChatCompletion, GatewayError>;
}

/// Exponential backoff for retryable failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub base_delay: Duration,
    pub factor: u32,
    /// Total attempts per call, including the first.
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base_delay: Duration::from_secs(1),
            factor: 2,
            max_attempts: 5,
        }
    }
}

impl RetryPolicy {
    /// Delay slept after failed attempt `attempt` (1-based).
    pub fn delay_after(&self, attempt: u32) -> Duration {
        self.base_delay
            .saturating_mul(self.factor.saturating_pow(attempt.saturating_sub(1)))
    }
}

/// Counting semaphore bounding in-flight requests per provider.
#[derive(Debug)]
pub struct ConcurrencyLimiter {
    available: Mutex<usize>,
    freed: Condvar,
    capacity: usize,
}

impl ConcurrencyLimiter {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self {
            available: Mutex::new(capacity),
            freed: Condvar::new(),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut available = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *available == 0 {
            available = self.freed.wait(available).unwrap_or_else(|e| e.into_inner());
        }
        *available -= 1;
        Permit { limiter: self }
    }
}

pub struct Permit<'a> {
    limiter: &'a ConcurrencyLimiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut available = self
            .limiter
            .available
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        *available += 1;
        self.limiter.freed.notify_one();
    }
}

/// Shareable provider: backend plus retry policy and concurrency limit.
#[derive(Clone)]
pub struct ProviderHandle {
    backend: Arc<dyn ChatBackend>,
    retry: RetryPolicy,
    limiter: Arc<ConcurrencyLimiter>,
}

impl fmt::Debug for ProviderHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProviderHandle")
            .field("backend", &self.backend.name())
            .field("retry", &self.retry)
            .field("concurrency", &self.limiter.capacity())
            .finish()
    }
}

impl ProviderHandle {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            backend,
            retry: RetryPolicy::default(),
            limiter: Arc::new(ConcurrencyLimiter::new(DEFAULT_CONCURRENCY)),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_concurrency(mut self, max_in_flight: usize) -> Self {
        self.limiter = Arc::new(ConcurrencyLimiter::new(max_in_flight));
        self
    }

    pub fn name(&self) -> &str {
        self.backend.name()
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        self.retry
    }
}

/// Sends `request` and returns the provider's first choice.
///
/// Requests that fail validation never reach the provider. Transport
/// failures and rate limits are retried with exponential backoff up to the
/// policy's attempt budget; every other error is returned immediately.
pub fn complete(request: &ChatRequest, provider: &ProviderHandle) -> Result<ChatCompletion, GatewayError> {
    request.validate()?;
    let policy = provider.retry;
    let started = Instant::now();
    let mut attempt = 1;
    loop {
        let result = {
            let _permit = provider.limiter.acquire();
            provider.backend.send(request)
        };
        match result {
            Ok(completion) => {
                log::debug!(
                    "{} call{} finished in {:.3}s after {attempt} attempt(s), usage {}+{}",
                    provider.name(),
                    request.tag.as_deref().map(|t| format!(" [{t}]")).unwrap_or_default(),
                    started.elapsed().as_secs_f64(),
                    completion.usage.prompt_tokens,
                    completion.usage.completion_tokens,
                );
                return Ok(completion);
            }
            Err(err) if err.is_retryable() && attempt < policy.max_attempts => {
                let delay = policy.delay_after(attempt);
                log::warn!(
                    "{} attempt {attempt} failed ({err}); retrying in {:?}",
                    provider.name(),
                    delay
                );
                thread::sleep(delay);
                attempt += 1;
            }
            Err(err) => {
                log::warn!(
                    "{} call failed after {attempt} attempt(s) in {:.3}s: {err}",
                    provider.name(),
                    started.elapsed().as_secs_f64()
                );
                return Err(err);
            }
        }
    }
}
