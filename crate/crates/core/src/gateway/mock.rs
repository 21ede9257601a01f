//! Scripted provider for hermetic runs.
//!
//! Replies are handed out in script order and each one exactly once. A keyed
//! mock keeps one queue per request tag, which keeps parallel suite runs
//! deterministic: a task's calls always consume that task's script.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::Value;

use super::{ChatBackend, ChatCompletion, ChatRequest, FinishReason, GatewayError, ProviderHandle, Usage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockReply {
    Text(String),
    Fail(GatewayError),
}

impl MockReply {
    pub fn text(text: impl Into<String>) -> Self {
        MockReply::Text(text.into())
    }

    /// Parses one script entry: a string, or `{"error": kind}` with kind one
    /// of `rate_limited`, `transport`, `auth`.
    pub fn from_json(value: &Value) -> Result<Self, String> {
        match value {
            Value::String(s) => Ok(MockReply::Text(s.clone())),
            Value::Object(obj) => match obj.get("error").and_then(Value::as_str) {
                Some("rate_limited") => Ok(MockReply::Fail(GatewayError::RateLimited("scripted".into()))),
                Some("transport") => Ok(MockReply::Fail(GatewayError::Transport("scripted".into()))),
                Some("auth") => Ok(MockReply::Fail(GatewayError::AuthFailed("scripted".into()))),
                _ => Err(format!("unrecognised mock entry {value}")),
            },
            _ => Err(format!("unrecognised mock entry {value}")),
        }
    }
}

#[derive(Debug)]
enum Script {
    Sequential(VecDeque<MockReply>),
    Keyed(HashMap<String, VecDeque<MockReply>>),
}

#[derive(Debug)]
pub struct MockProvider {
    script: Mutex<Script>,
    served: AtomicUsize,
    requests: Mutex<Vec<ChatRequest>>,
}

impl MockProvider {
    pub fn sequential(replies: Vec<MockReply>) -> Self {
        Self::with_script(Script::Sequential(replies.into()))
    }

    /// One reply queue per request tag. Untagged requests, or tags without a
    /// queue, exhaust immediately.
    pub fn keyed(replies: HashMap<String, Vec<MockReply>>) -> Self {
        Self::with_script(Script::Keyed(
            replies.into_iter().map(|(k, v)| (k, v.into())).collect(),
        ))
    }

    /// A JSON array is a sequential script; a JSON object maps tags to arrays.
    pub fn from_json(value: &Value) -> Result<Self, String> {
        let parse_list = |v: &Value| -> Result<Vec<MockReply>, String> {
            v.as_array()
                .ok_or_else(|| format!("expected an array of replies, found {v}"))?
                .iter()
                .map(MockReply::from_json)
                .collect()
        };
        match value {
            Value::Array(_) => Ok(Self::sequential(parse_list(value)?)),
            Value::Object(obj) => {
                let mut map = HashMap::new();
                for (tag, list) in obj {
                    map.insert(tag.clone(), parse_list(list)?);
                }
                Ok(Self::keyed(map))
            }
            other => Err(format!("mock script must be an array or object, found {other}")),
        }
    }

    fn with_script(script: Script) -> Self {
        Self {
            script: Mutex::new(script),
            served: AtomicUsize::new(0),
            requests: Mutex::new(Vec::new()),
        }
    }

    /// Number of replies handed out so far.
    pub fn served(&self) -> usize {
        self.served.load(Ordering::SeqCst)
    }

    /// Every request received, in arrival order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn next_reply(&self, request: &ChatRequest) -> Option<MockReply> {
        let mut script = self.script.lock().unwrap_or_else(|e| e.into_inner());
        match &mut *script {
            Script::Sequential(queue) => queue.pop_front(),
            Script::Keyed(map) => request
                .tag
                .as_ref()
                .and_then(|tag| map.get_mut(tag))
                .and_then(VecDeque::pop_front),
        }
    }
}

fn approx_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

impl ChatBackend for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatCompletion, GatewayError> {
        self.requests
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(request.clone());
        match self.next_reply(request) {
            None => Err(GatewayError::MockExhausted {
                served: self.served(),
            }),
            Some(reply) => {
                self.served.fetch_add(1, Ordering::SeqCst);
                match reply {
                    MockReply::Fail(err) => Err(err),
                    MockReply::Text(text) => {
                        let prompt: u64 = request
                            .messages
                            .iter()
                            .map(|m| approx_tokens(&m.text()))
                            .sum();
                        let usage = Usage {
                            prompt_tokens: prompt,
                            completion_tokens: approx_tokens(&text),
                        };
                        Ok(ChatCompletion::new(text, FinishReason::Stop, usage))
                    }
                }
            }
        }
    }
}

/// Handle over a sequential mock.
pub fn mock_provider(script: Vec<MockReply>) -> ProviderHandle {
    ProviderHandle::new(Arc::new(MockProvider::sequential(script)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{complete, ChatMessage};
    use std::collections::BTreeSet;
    use std::thread;

    fn req() -> ChatRequest {
        ChatRequest::new("m", vec![ChatMessage::user("go")])
    }

    #[test]
    fn replays_in_order() {
        let p = mock_provider(vec![MockReply::text("a"), MockReply::text("b")]);
        assert_eq!(complete(&req(), &p).unwrap().text, "a");
        assert_eq!(complete(&req(), &p).unwrap().text, "b");
    }

    #[test]
    fn empty_script_exhausts() {
        let p = mock_provider(vec![]);
        assert_eq!(
            complete(&req(), &p).unwrap_err(),
            GatewayError::MockExhausted { served: 0 }
        );
    }

    #[test]
    fn third_call_on_two_replies_exhausts() {
        let p = mock_provider(vec![MockReply::text("a"), MockReply::text("b")]);
        let outcomes: Vec<_> = (0..3).map(|_| complete(&req(), &p)).collect();
        assert!(outcomes[0].is_ok());
        assert!(outcomes[1].is_ok());
        assert_eq!(
            outcomes[2].clone().unwrap_err(),
            GatewayError::MockExhausted { served: 2 }
        );
    }

    #[test]
    fn concurrent_workers_receive_each_reply_once() {
        let script: Vec<_> = (0..10).map(|i| MockReply::text(format!("r{i}"))).collect();
        let p = mock_provider(script);
        let got: Vec<String> = thread::scope(|s| {
            let workers: Vec<_> = (0..2)
                .map(|_| {
                    let p = p.clone();
                    s.spawn(move || {
                        let mut mine = Vec::new();
                        while let Ok(c) = complete(&req(), &p) {
                            mine.push(c.text);
                        }
                        mine
                    })
                })
                .collect();
            workers.into_iter().flat_map(|w| w.join().unwrap()).collect()
        });
        assert_eq!(got.len(), 10);
        let distinct: BTreeSet<_> = got.iter().cloned().collect();
        assert_eq!(distinct.len(), 10);
    }

    #[test]
    fn keyed_script_routes_by_tag() {
        let mut map = HashMap::new();
        map.insert("t1".to_string(), vec![MockReply::text("one")]);
        map.insert("t2".to_string(), vec![MockReply::text("two")]);
        let p = ProviderHandle::new(Arc::new(MockProvider::keyed(map)));
        assert_eq!(complete(&req().with_tag("t2"), &p).unwrap().text, "two");
        assert_eq!(complete(&req().with_tag("t1"), &p).unwrap().text, "one");
        assert!(complete(&req().with_tag("t1"), &p).is_err());
        assert!(complete(&req(), &p).is_err());
    }

    #[test]
    fn parses_json_scripts() {
        let v: Value = serde_json::json!(["a", {"error": "auth"}]);
        let mock = MockProvider::from_json(&v).unwrap();
        let p = ProviderHandle::new(Arc::new(mock));
        assert_eq!(complete(&req(), &p).unwrap().text, "a");
        assert!(matches!(complete(&req(), &p), Err(GatewayError::AuthFailed(_))));
        assert!(MockProvider::from_json(&serde_json::json!([1])).is_err());
        assert!(MockProvider::from_json(&serde_json::json!({"t": ["x"]})).is_ok());
    }
}
