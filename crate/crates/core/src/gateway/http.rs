//! OpenAI-compatible chat-completions client.
//!
//! Endpoint and credential come from `CHARTFORGE_API_BASE` and
//! `CHARTFORGE_API_KEY`. Requests are plain JSON POSTs to
//! `{base}/chat/completions`; streaming and tool calls are not used.

use std::time::Duration;

use serde_json::{json, Value};

use super::{
    ChatBackend, ChatCompletion, ChatMessage, ChatRequest, ContentPart, FinishReason, GatewayError,
    Role, Usage,
};

pub const API_KEY_ENV: &str = "CHARTFORGE_API_KEY";
pub const API_BASE_ENV: &str = "CHARTFORGE_API_BASE";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";

const REQUEST_TIMEOUT: Duration = Duration::from_secs(300);

fn part_to_wire(part: &ContentPart) -> Value {
    match part {
        ContentPart::Text { text } => json!({"type": "text", "text": text}),
        ContentPart::ImageData { .. } => json!({
            "type": "image_url",
            "image_url": {"url": part.data_url().expect("image part")},
        }),
    }
}

fn message_to_wire(message: &ChatMessage) -> Value {
    let role = match message.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    };
    // Single text parts go out as a plain string, which every compatible
    // server accepts; anything multimodal uses the parts array.
    let content = match message.content.as_slice() {
        [ContentPart::Text { text }] => Value::String(text.clone()),
        parts => Value::Array(parts.iter().map(part_to_wire).collect()),
    };
    json!({"role": role, "content": content})
}

/// Request body in the chat-completions schema. The tag is not sent.
pub fn request_to_wire(request: &ChatRequest) -> Value {
    json!({
        "model": request.model_name,
        "messages": request.messages.iter().map(message_to_wire).collect::<Vec<_>>(),
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
    })
}

fn protocol(msg: impl Into<String>) -> GatewayError {
    GatewayError::Protocol(msg.into())
}

fn part_from_wire(value: &Value) -> Result<ContentPart, GatewayError> {
    match value.get("type").and_then(Value::as_str) {
        Some("text") => Ok(ContentPart::text(
            value
                .get("text")
                .and_then(Value::as_str)
                .ok_or_else(|| protocol("text part without text"))?,
        )),
        Some("image_url") => {
            let url = value
                .pointer("/image_url/url")
                .and_then(Value::as_str)
                .ok_or_else(|| protocol("image part without url"))?;
            let rest = url
                .strip_prefix("data:")
                .ok_or_else(|| protocol("image url is not a data URL"))?;
            let (media_type, payload) = rest
                .split_once(";base64,")
                .ok_or_else(|| protocol("data URL is not base64"))?;
            Ok(ContentPart::ImageData {
                media_type: media_type.into(),
                base64: payload.into(),
            })
        }
        _ => Err(protocol(format!("unknown content part {value}"))),
    }
}

/// Inverse of [`request_to_wire`].
pub fn request_from_wire(value: &Value) -> Result<ChatRequest, GatewayError> {
    let model = value
        .get("model")
        .and_then(Value::as_str)
        .ok_or_else(|| protocol("missing model"))?;
    let messages = value
        .get("messages")
        .and_then(Value::as_array)
        .ok_or_else(|| protocol("missing messages"))?
        .iter()
        .map(|m| {
            let role = match m.get("role").and_then(Value::as_str) {
                Some("system") => Role::System,
                Some("user") => Role::User,
                Some("assistant") => Role::Assistant,
                other => return Err(protocol(format!("unknown role {other:?}"))),
            };
            let content = match m.get("content") {
                Some(Value::String(s)) => vec![ContentPart::text(s.clone())],
                Some(Value::Array(parts)) => {
                    parts.iter().map(part_from_wire).collect::<Result<_, _>>()?
                }
                _ => return Err(protocol("message without content")),
            };
            Ok(ChatMessage { role, content })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut request = ChatRequest::new(model, messages);
    if let Some(t) = value.get("temperature").and_then(Value::as_f64) {
        request.temperature = t;
    }
    if let Some(n) = value.get("max_tokens").and_then(Value::as_u64) {
        request.max_output_tokens =
            u32::try_from(n).map_err(|_| protocol("max_tokens out of range"))?;
    }
    Ok(request)
}

/// Reads the first choice out of a chat-completions response body.
pub fn completion_from_wire(value: &Value) -> Result<ChatCompletion, GatewayError> {
    let choice = value
        .pointer("/choices/0")
        .ok_or_else(|| protocol("response has no choices"))?;
    let text = match choice.pointer("/message/content") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => String::new(),
        Some(other) => return Err(protocol(format!("unexpected content {other}"))),
    };
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("stop") => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        _ => FinishReason::Error,
    };
    let usage = Usage {
        prompt_tokens: value
            .pointer("/usage/prompt_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
        completion_tokens: value
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
    };
    Ok(ChatCompletion::new(text, finish_reason, usage))
}

/// Maps a non-success HTTP status onto the gateway error taxonomy.
pub fn classify_status(status: u16, body: String) -> GatewayError {
    match status {
        401 | 403 => GatewayError::AuthFailed(format!("HTTP {status}: {body}")),
        429 => GatewayError::RateLimited(format!("HTTP 429: {body}")),
        500..=599 => GatewayError::Transport(format!("HTTP {status}: {body}")),
        _ => GatewayError::Rejected { status, body },
    }
}

pub struct OpenAiCompatible {
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for OpenAiCompatible {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiCompatible")
            .field("base_url", &self.base_url)
            .field("has_api_key", &!self.api_key.is_empty())
            .finish()
    }
}

impl OpenAiCompatible {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(REQUEST_TIMEOUT))
            .build();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            agent: config.into(),
        }
    }

    /// Reads the endpoint and credential from the environment. A missing or
    /// empty key is an error so hermetic runs can never reach a paid API.
    pub fn from_env() -> Result<Self, GatewayError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| GatewayError::AuthFailed(format!("{API_KEY_ENV} is not set")))?;
        let base = std::env::var(API_BASE_ENV)
            .ok()
            .filter(|b| !b.is_empty())
            .unwrap_or_else(|| DEFAULT_API_BASE.to_string());
        Ok(Self::new(base, key))
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }
}

impl ChatBackend for OpenAiCompatible {
    fn name(&self) -> &str {
        "openai-compatible"
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatCompletion, GatewayError> {
        let body = request_to_wire(request);
        let mut response = self
            .agent
            .post(&self.endpoint())
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, text));
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| protocol(format!("response is not JSON: {e}")))?;
        if let Some(err) = value.get("error").filter(|e| !e.is_null()) {
            return Err(protocol(format!("provider error: {err}")));
        }
        completion_from_wire(&value)
    }
}
