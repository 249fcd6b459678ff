//! Chat-completion access for teacher models and models under evaluation.
//!
//! A [`Gateway`] wraps a single-attempt [`ChatBackend`] (HTTP or scripted
//! mock) with retry, exponential backoff and a shared rate limiter. It is
//! the only part of the crate that knows about HTTP.

mod http;
mod mock;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::HttpBackend;
pub use mock::{MockBackend, MockBuilder, MockFailure, MockOutcome};

/// Shared handle to a configured endpoint.
pub type Endpoint = Arc<Gateway>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Zero disables rate limiting.
    #[serde(default = "default_requests_per_minute")]
    pub requests_per_minute: u32,
    #[serde(default = "default_backoff_base_ms")]
    pub backoff_base_ms: u64,
    #[serde(default)]
    pub jitter_seed: u64,
}

fn default_max_output_tokens() -> u32 {
    512
}
fn default_timeout_secs() -> f64 {
    60.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_requests_per_minute() -> u32 {
    60
}
fn default_backoff_base_ms() -> u64 {
    500
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env: None,
            temperature: 0.0,
            max_output_tokens: default_max_output_tokens(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            requests_per_minute: default_requests_per_minute(),
            backoff_base_ms: default_backoff_base_ms(),
            jitter_seed: 0,
        }
    }

    /// Configuration used by scripted mocks: no backoff, no rate limit.
    pub fn for_mock() -> Self {
        EndpointConfig {
            requests_per_minute: 0,
            backoff_base_ms: 0,
            ..EndpointConfig::new("mock://", "mock")
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: String| Err(GatewayError::InvalidConfig(m));
        if self.model_name.trim().is_empty() {
            return bad("model_name is empty".into());
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return bad(format!("timeout_secs must be > 0, got {}", self.timeout_secs));
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be > 0".into());
        }
        Ok(())
    }

    /// Hash of every setting except the key variable name.
    pub fn fingerprint(&self) -> String {
        let mut public = self.clone();
        public.api_key_env = None;
        let bytes = serde_json::to_vec(&public).expect("config serializes");
        hex::encode(&Sha256::digest(bytes)[..8])
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
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request: Vec<Message>,
    pub response_text: String,
    pub latency_ms: u64,
    pub attempts: u32,
    pub endpoint_fingerprint: String,
}

/// Failure of a single request attempt.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AttemptError {
    #[error("request timed out")]
    Timeout,
    #[error("rate limited")]
    RateLimited,
    #[error("server error {0}")]
    Server(u16),
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("mock script exhausted")]
    ScriptExhausted,
}

impl AttemptError {
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            AttemptError::Timeout
                | AttemptError::RateLimited
                | AttemptError::Server(_)
                | AttemptError::Connection(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("server error {status} after {attempts} attempts")]
    Server { status: u16, attempts: u32 },
    #[error("endpoint unreachable after {attempts} attempts: {detail}")]
    Unreachable { attempts: u32, detail: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("mock script exhausted")]
    ScriptExhausted,
    #[error("mock script is empty")]
    EmptyScript,
    #[error("invalid endpoint config: {0}")]
    InvalidConfig(String),
    #[error("no messages to send")]
    EmptyMessages,
}

impl GatewayError {
    fn from_attempt(err: AttemptError, attempts: u32) -> Self {
        match err {
            AttemptError::Timeout => GatewayError::Timeout { attempts },
            AttemptError::RateLimited => GatewayError::RateLimited { attempts },
            AttemptError::Server(status) => GatewayError::Server { status, attempts },
            AttemptError::Connection(detail) => GatewayError::Unreachable { attempts, detail },
            AttemptError::Auth(m) => GatewayError::Auth(m),
            AttemptError::Malformed(m) => GatewayError::MalformedResponse(m),
            AttemptError::Rejected { status, body } => GatewayError::Rejected { status, body },
            AttemptError::ScriptExhausted => GatewayError::ScriptExhausted,
        }
    }
}

/// One request attempt against a chat endpoint.
#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn send(
        &self,
        config: &EndpointConfig,
        messages: &[Message],
    ) -> Result<String, AttemptError>;
}

/// Delay before retry `retry` (1-based): `base * 2^(retry-1) * (1 + j)`
/// with `j` drawn uniformly from `[0, 0.25)`, capped at 30 s.
fn backoff_delay(base_ms: u64, retry: u32, jitter: f64) -> Duration {
    let exp = 2f64.powi(retry.saturating_sub(1).min(20) as i32);
    let ms = (base_ms as f64 * exp * (1.0 + jitter)).min(30_000.0);
    Duration::from_micros((ms * 1000.0).round() as u64)
}

/// The delays a gateway seeded with `seed` sleeps before each retry.
pub fn backoff_schedule(base_ms: u64, max_retries: u32, seed: u64) -> Vec<Duration> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=max_retries)
        .map(|k| backoff_delay(base_ms, k, rng.random_range(0.0..0.25)))
        .collect()
}

/// Spaces request starts at least `60 / rpm` seconds apart across all
/// callers sharing the limiter.
#[derive(Debug)]
struct RateLimiter {
    interval: Option<Duration>,
    next_slot: tokio::sync::Mutex<Option<tokio::time::Instant>>,
}

impl RateLimiter {
    fn new(rpm: u32) -> Self {
        RateLimiter {
            interval: (rpm > 0).then(|| Duration::from_secs_f64(60.0 / rpm as f64)),
            next_slot: tokio::sync::Mutex::new(None),
        }
    }

    async fn acquire(&self) {
        let Some(interval) = self.interval else {
            return;
        };
        let slot = {
            let mut next = self.next_slot.lock().await;
            let now = tokio::time::Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + interval);
            slot
        };
        tokio::time::sleep_until(slot).await;
    }
}

pub struct Gateway {
    config: EndpointConfig,
    backend: Arc<dyn ChatBackend>,
    limiter: RateLimiter,
    jitter: Mutex<ChaCha8Rng>,
    fingerprint: String,
    requests: AtomicU64,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("model", &self.config.model_name)
            .field("fingerprint", &self.fingerprint)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn with_backend(
        config: EndpointConfig,
        backend: Arc<dyn ChatBackend>,
    ) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(Gateway {
            limiter: RateLimiter::new(config.requests_per_minute),
            jitter: Mutex::new(ChaCha8Rng::seed_from_u64(config.jitter_seed)),
            fingerprint: config.fingerprint(),
            requests: AtomicU64::new(0),
            backend,
            config,
        })
    }

    /// An HTTP chat-completions endpoint.
    pub fn http(config: EndpointConfig) -> Result<Self, GatewayError> {
        let backend = HttpBackend::new(&config)?;
        Gateway::with_backend(config, Arc::new(backend))
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Attempts sent so far, retries included.
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    /// Sends `messages`, retrying transient failures with backoff.
    pub async fn complete(&self, messages: &[Message]) -> Result<ChatExchange, GatewayError> {
        if messages.is_empty() {
            return Err(GatewayError::EmptyMessages);
        }
        let started = Instant::now();
        let mut attempts = 0;
        loop {
            self.limiter.acquire().await;
            attempts += 1;
            self.requests.fetch_add(1, Ordering::Relaxed);
            match self.backend.send(&self.config, messages).await {
                Ok(text) => {
                    return Ok(ChatExchange {
                        request: messages.to_vec(),
                        response_text: text,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempts,
                        endpoint_fingerprint: self.fingerprint.clone(),
                    })
                }
                Err(err) if err.is_transient() && attempts <= self.config.max_retries => {
                    let jitter = self
                        .jitter
                        .lock()
                        .expect("jitter lock poisoned")
                        .random_range(0.0..0.25);
                    let delay = backoff_delay(self.config.backoff_base_ms, attempts, jitter);
                    tracing::warn!(attempt = attempts, error = %err, ?delay, "retrying chat request");
                    tokio::time::sleep(delay).await;
                }
                Err(err) => return Err(GatewayError::from_attempt(err, attempts)),
            }
        }
    }
}

/// A gateway replaying `script` in order through a mock backend.
pub fn mock_from_script(script: Vec<MockOutcome>) -> Result<Endpoint, GatewayError> {
    let backend = MockBackend::from_script(script)?;
    Ok(Arc::new(Gateway::with_backend(EndpointConfig::for_mock(), Arc::new(backend))?))
}

/// Wraps an already-built mock in a gateway with the given retry budget.
pub fn mock_endpoint(backend: Arc<MockBackend>, max_retries: u32) -> Endpoint {
    let config = EndpointConfig { max_retries, ..EndpointConfig::for_mock() };
    Arc::new(Gateway::with_backend(config, backend).expect("mock config is valid"))
}
