//! HTTP plumbing shared by the external-service clients: JSON POST, retry
//! with jittered exponential backoff, and bounded in-flight fan-out.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HttpError {
    /// Connection failures, timeouts, 5xx and 429: worth retrying.
    #[error("transient failure: {0}")]
    Transient(String),
    /// Quota or billing exhaustion; retrying will not help.
    #[error("quota exceeded: {0}")]
    Quota(String),
    /// Anything else the server rejected (4xx) or sent back unparseable.
    #[error("request failed: {0}")]
    Fatal(String),
}

impl HttpError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, HttpError::Transient(_))
    }
}

/// An HTTP endpoint with optional credentials taken from the environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub url: String,
    /// Name of the environment variable holding the secret, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Header carrying the secret. `Authorization` values are sent as
    /// `Bearer <key>`.
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_auth_header() -> String {
    "Authorization".to_owned()
}

fn default_timeout_secs() -> u64 {
    60
}

impl Endpoint {
    pub fn new(url: impl Into<String>) -> Self {
        Endpoint {
            url: url.into(),
            api_key_env: None,
            auth_header: default_auth_header(),
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn with_key_env(mut self, var: impl Into<String>) -> Self {
        self.api_key_env = Some(var.into());
        self
    }

    fn api_key(&self) -> Result<Option<String>, HttpError> {
        match &self.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| HttpError::Fatal(format!("environment variable {var} is not set"))),
        }
    }
}

/// Blocking JSON client around a shared connection pool.
#[derive(Debug, Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    endpoint: Endpoint,
}

impl JsonClient {
    pub fn new(endpoint: Endpoint) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(endpoint.timeout_secs)))
            .build();
        JsonClient { agent: ureq::Agent::new_with_config(config), endpoint }
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    /// POST `body` to `url` (or the endpoint URL when `None`) and parse the
    /// JSON response.
    pub fn post(&self, url: Option<&str>, body: &Value) -> Result<Value, HttpError> {
        let url = url.unwrap_or(&self.endpoint.url);
        let mut req = self.agent.post(url);
        if let Some(key) = self.endpoint.api_key()? {
            let value = if self.endpoint.auth_header.eq_ignore_ascii_case("authorization") {
                format!("Bearer {key}")
            } else {
                key
            };
            req = req.header(self.endpoint.auth_header.as_str(), value);
        }
        let mut resp = req.send_json(body).map_err(|e| HttpError::Transient(format!("{url}: {e}")))?;
        let status = resp.status().as_u16();
        let text =
            resp.body_mut().read_to_string().map_err(|e| HttpError::Transient(format!("{url}: reading body: {e}")))?;
        match status {
            200..=299 => {
                serde_json::from_str(&text).map_err(|e| HttpError::Fatal(format!("{url}: response is not JSON: {e}")))
            }
            402 => Err(HttpError::Quota(format!("{url}: HTTP 402 {text}"))),
            429 if text.contains("quota") || text.contains("insufficient") => {
                Err(HttpError::Quota(format!("{url}: HTTP 429 {text}")))
            }
            429 | 500..=599 => Err(HttpError::Transient(format!("{url}: HTTP {status} {text}"))),
            _ => Err(HttpError::Fatal(format!("{url}: HTTP {status} {text}"))),
        }
    }
}

/// Exponential backoff with full jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Additional attempts after the first.
    pub retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { retries: 3, initial_backoff_ms: 500, max_backoff_ms: 30_000 }
    }
}

impl RetryPolicy {
    /// No waiting between attempts; for tests and stubs.
    pub fn immediate(retries: u32) -> Self {
        RetryPolicy { retries, initial_backoff_ms: 0, max_backoff_ms: 0 }
    }

    pub fn backoff(&self, attempt: u32) -> Duration {
        if self.initial_backoff_ms == 0 {
            return Duration::ZERO;
        }
        let cap = self.initial_backoff_ms.saturating_mul(1u64 << attempt.min(20)).min(self.max_backoff_ms);
        Duration::from_millis(rand::random_range(0..=cap))
    }

    /// Run `op` until it succeeds, fails with a non-retryable error, or the
    /// retry budget is spent. `op` receives the zero-based attempt number.
    pub fn run<T, E, F, R>(&self, mut op: F, retryable: R) -> Result<T, E>
    where
        F: FnMut(u32) -> Result<T, E>,
        R: Fn(&E) -> bool,
    {
        let mut attempt = 0;
        loop {
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(e) if attempt < self.retries && retryable(&e) => {
                    std::thread::sleep(self.backoff(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Apply `f` to every item with at most `max_inflight` calls running at
/// once. Results come back in input order. Once `f` returns an error for
/// which `abort` is true, workers stop picking up new items.
pub fn bounded_map<T, U, E, F, A>(items: &[T], max_inflight: usize, f: F, abort: A) -> Vec<Option<Result<U, E>>>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(usize, &T) -> Result<U, E> + Sync,
    A: Fn(&E) -> bool + Sync,
{
    let workers = max_inflight.max(1).min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let stop = std::sync::atomic::AtomicBool::new(false);
    let slots: Vec<Mutex<Option<Result<U, E>>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(i, &items[i]);
                if let Err(e) = &r {
                    if abort(e) {
                        stop.store(true, Ordering::SeqCst);
                    }
                }
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("slot lock")).collect()
}
