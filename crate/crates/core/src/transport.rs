//! JSON-over-HTTP transport shared by the remote embedding provider and the
//! remote chat agent, plus a recorded transport for offline tests.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("recorded transport: {0}")]
    Recording(String),
}

impl TransportError {
    /// Client errors other than 408/429 will not succeed on retry.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Connection(_) => true,
            TransportError::Status(s) => *s >= 500 || *s == 408 || *s == 429,
            _ => false,
        }
    }
}

pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<Value, TransportError>;
}

/// Blocking HTTP transport.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpTransport { agent }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        HttpTransport::new(Duration::from_secs(10))
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<Value, TransportError> {
        let mut req = self.agent.post(url);
        if let Some(token) = bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(body).map_err(|e| match e {
            ureq::Error::StatusCode(code) => TransportError::Status(code),
            other => TransportError::Connection(other.to_string()),
        })?;
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| TransportError::Malformed(e.to_string()))
    }
}

/// Exponential backoff schedule: `retries` extra attempts after the first,
/// sleeping `initial`, `2·initial`, `4·initial`, ...
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub retries: u32,
    pub initial: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { retries: 3, initial: Duration::from_millis(250) }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy { retries: 0, initial: Duration::ZERO }
    }

    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, TransportError>) -> Result<T, TransportError> {
        let mut delay = self.initial;
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if attempt < self.retries && e.is_retryable() => {
                    log::warn!("transport attempt {} failed: {e}; retrying in {delay:?}", attempt + 1);
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Matcher half of a recorded exchange. Absent fields match anything.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RequestMatcher {
    #[serde(default)]
    pub url_contains: Option<String>,
    #[serde(default)]
    pub body_contains: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordedResponse {
    #[serde(default = "ok_status")]
    pub status: u16,
    #[serde(default)]
    pub body: Value,
}

fn ok_status() -> u16 {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordedExchange {
    pub request: RequestMatcher,
    pub response: RecordedResponse,
}

/// Replays an ordered list of exchanges. Each call consumes the next entry;
/// a request that does not satisfy that entry's matcher is an error.
pub struct RecordedTransport {
    exchanges: Vec<RecordedExchange>,
    cursor: Mutex<usize>,
}

impl RecordedTransport {
    pub fn new(exchanges: Vec<RecordedExchange>) -> Self {
        RecordedTransport { exchanges, cursor: Mutex::new(0) }
    }

    pub fn from_file(path: &Path) -> Result<Self, TransportError> {
        let text = std::fs::read_to_string(path).map_err(|e| TransportError::Recording(e.to_string()))?;
        let exchanges: Vec<RecordedExchange> =
            serde_json::from_str(&text).map_err(|e| TransportError::Recording(e.to_string()))?;
        Ok(RecordedTransport::new(exchanges))
    }

    pub fn consumed(&self) -> usize {
        *self.cursor.lock().unwrap()
    }
}

impl Transport for RecordedTransport {
    fn post_json(&self, url: &str, _bearer: Option<&str>, body: &Value) -> Result<Value, TransportError> {
        let mut cursor = self.cursor.lock().unwrap();
        let ex = self
            .exchanges
            .get(*cursor)
            .ok_or_else(|| TransportError::Recording(format!("no exchange left for call #{}", *cursor)))?;
        if let Some(needle) = &ex.request.url_contains {
            if !url.contains(needle.as_str()) {
                return Err(TransportError::Recording(format!("url {url} does not contain {needle}")));
            }
        }
        if let Some(needle) = &ex.request.body_contains {
            if !body.to_string().contains(needle.as_str()) {
                return Err(TransportError::Recording(format!("body does not contain {needle}")));
            }
        }
        *cursor += 1;
        if !(200..300).contains(&ex.response.status) {
            return Err(TransportError::Status(ex.response.status));
        }
        Ok(ex.response.body.clone())
    }
}

/// Wraps a transport and counts calls.
pub struct CountingTransport<T> {
    pub inner: T,
    calls: AtomicUsize,
}

impl<T> CountingTransport<T> {
    pub fn new(inner: T) -> Self {
        CountingTransport { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<T: Transport> Transport for CountingTransport<T> {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<Value, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.post_json(url, bearer, body)
    }
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<Value, TransportError> {
        (**self).post_json(url, bearer, body)
    }
}
