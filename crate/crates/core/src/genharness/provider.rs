use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::digest::sha256_hex;
use crate::net::{Endpoint, HttpError, JsonClient};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    /// Whatever the provider reported besides the text (model revision,
    /// finish reason, token usage).
    #[serde(default)]
    pub metadata: Value,
}

/// One chat-completion model behind some transport.
pub trait ChatProvider: Send + Sync {
    /// Model name recorded on generated documents.
    fn model(&self) -> String;
    fn complete(&self, messages: &[ChatMessage], temperature: f64) -> Result<Completion, HttpError>;
}

/// OpenAI-style `POST {base_url}/chat/completions`. Most hosted providers
/// accept this shape, so one adapter covers them given a base URL and key.
#[derive(Debug, Clone)]
pub struct OpenAiCompatible {
    client: JsonClient,
    model: String,
    url: String,
}

impl OpenAiCompatible {
    pub fn new(model: impl Into<String>, endpoint: Endpoint) -> Self {
        let url = format!("{}/chat/completions", endpoint.url.trim_end_matches('/'));
        OpenAiCompatible { client: JsonClient::new(endpoint), model: model.into(), url }
    }
}

impl ChatProvider for OpenAiCompatible {
    fn model(&self) -> String {
        self.model.clone()
    }

    fn complete(&self, messages: &[ChatMessage], temperature: f64) -> Result<Completion, HttpError> {
        let body = json!({ "model": self.model, "messages": messages, "temperature": temperature });
        let v = self.client.post(Some(&self.url), &body)?;
        let text = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| HttpError::Fatal(format!("{}: response has no choices[0].message.content", self.url)))?;
        let mut metadata = serde_json::Map::new();
        for key in ["id", "model", "usage", "system_fingerprint"] {
            if let Some(x) = v.get(key) {
                metadata.insert(key.to_owned(), x.clone());
            }
        }
        if let Some(x) = v.pointer("/choices/0/finish_reason") {
            metadata.insert("finish_reason".into(), x.clone());
        }
        Ok(Completion { text: text.to_owned(), metadata: Value::Object(metadata) })
    }
}

/// Deterministic offline provider. The reply is built from the persona and
/// question lines of the prompt, so it varies with the job but never with
/// timing. Failures can be injected per prompt.
#[derive(Debug, Default)]
pub struct StubProvider {
    model: String,
    calls: AtomicUsize,
    failures: Mutex<HashMap<String, (u32, HttpError)>>,
    quota_after: Option<usize>,
}

const STUB_SENTENCES: [&str; 5] = [
    "I try to live by the values my family taught me.",
    "Most days start early and end with time for the people I love.",
    "I care about doing good work and being someone others can count on.",
    "There is always something new I want to learn.",
    "Looking ahead, I hope to keep growing in every part of my life.",
];

impl StubProvider {
    pub fn new(model: impl Into<String>) -> Self {
        StubProvider { model: model.into(), ..StubProvider::default() }
    }

    /// Fail the next `times` requests whose prompt equals `prompt`.
    pub fn fail_prompt(&self, prompt: &str, times: u32, error: HttpError) {
        self.failures.lock().expect("stub lock").insert(sha256_hex(prompt.as_bytes()), (times, error));
    }

    /// Report quota exhaustion once `n` requests have been served.
    pub fn with_quota(mut self, n: usize) -> Self {
        self.quota_after = Some(n);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reply(prompt: &str) -> String {
        let line_after = |head: &str| {
            prompt
                .split(head)
                .nth(1)
                .and_then(|s| s.lines().map(str::trim).find(|l| !l.is_empty()))
                .unwrap_or("")
                .to_owned()
        };
        let persona = line_after("Personality Attributes:");
        let question = line_after("Question:");
        let pick = usize::from_str_radix(&sha256_hex(prompt.as_bytes())[..8], 16).unwrap_or(0);
        let mut out = format!("{} Answering \"{}\":", persona.replace("You are", "I am"), question);
        for k in 0..STUB_SENTENCES.len() {
            out.push(' ');
            out.push_str(STUB_SENTENCES[(pick + k) % STUB_SENTENCES.len()]);
        }
        out
    }
}

impl ChatProvider for StubProvider {
    fn model(&self) -> String {
        self.model.clone()
    }

    fn complete(&self, messages: &[ChatMessage], _temperature: f64) -> Result<Completion, HttpError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if self.quota_after.is_some_and(|q| n >= q) {
            return Err(HttpError::Quota(format!("{}: stub quota exhausted", self.model)));
        }
        let prompt: String = messages.iter().map(|m| m.content.as_str()).collect();
        let key = sha256_hex(prompt.as_bytes());
        if let Some((left, err)) = self.failures.lock().expect("stub lock").get_mut(&key) {
            if *left > 0 {
                *left -= 1;
                return Err(err.clone());
            }
        }
        Ok(Completion { text: StubProvider::reply(&prompt), metadata: json!({ "provider": "stub" }) })
    }
}
