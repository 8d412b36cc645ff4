//! Chat-completion transport, retries and request pacing.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::prompt::ChatMessage;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

/// A failed call. Only transient failures are retried.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TransportError {
    Transient(String),
    Permanent(String),
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportError::Transient(m) => write!(f, "transient: {m}"),
            TransportError::Permanent(m) => write!(f, "permanent: {m}"),
        }
    }
}

pub trait ChatClient: Sync {
    /// Returns the text of the first choice.
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub multiplier: f64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 4, initial_backoff_ms: 500, multiplier: 2.0, max_backoff_ms: 8_000 }
    }
}

impl RetryPolicy {
    /// Wait before attempt `attempt + 1`, counting from attempt 1.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self.initial_backoff_ms as f64 * self.multiplier.powi(attempt.saturating_sub(1) as i32);
        Duration::from_millis(ms.min(self.max_backoff_ms as f64) as u64)
    }
}

/// Keeps request starts at least `floor` apart across threads.
#[derive(Debug)]
pub struct Pacer {
    floor: Duration,
    next: Mutex<Option<Instant>>,
}

impl Pacer {
    pub fn new(floor: Duration) -> Self {
        Self { floor, next: Mutex::new(None) }
    }

    /// Blocks until a request may start and returns the start time.
    pub fn wait(&self) -> Instant {
        let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(at) = *next {
            let now = Instant::now();
            if at > now {
                std::thread::sleep(at - now);
            }
        }
        let start = Instant::now();
        *next = Some(start + self.floor);
        start
    }
}

/// Endpoint and decoding settings shared by both clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientSettings {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Requests in flight at once.
    pub concurrency: usize,
    /// Minimum spacing between request starts.
    pub min_interval_ms: u64,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for ClientSettings {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model: "emollama-chat-13b".into(),
            api_key_env: "POLISTANCE_API_KEY".into(),
            temperature: 0.0,
            max_tokens: 16,
            concurrency: 4,
            min_interval_ms: 0,
            timeout_secs: 60,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

/// OpenAI-style `POST {base_url}/chat/completions`.
pub struct HttpChatClient {
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new(settings: &ClientSettings) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(settings.timeout_secs)))
            .build()
            .into();
        Self {
            url: format!("{}/chat/completions", settings.base_url.trim_end_matches('/')),
            api_key: std::env::var(&settings.api_key_env).ok().filter(|k| !k.is_empty()),
            agent,
        }
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = req.send_json(request).map_err(|e| match e {
            ureq::Error::StatusCode(code) if code == 429 || code >= 500 => {
                TransportError::Transient(format!("HTTP {code}"))
            }
            ureq::Error::StatusCode(code) => TransportError::Permanent(format!("HTTP {code}")),
            other => TransportError::Transient(other.to_string()),
        })?;
        let body: CompletionResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| TransportError::Permanent(format!("bad response body: {e}")))?;
        body.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| TransportError::Permanent("response has no message content".into()))
    }
}
