//! Chat-completion providers: a live HTTP client for chat-completions
//! compatible endpoints and a deterministic offline mock that replays
//! fixture responses.

use std::collections::VecDeque;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_API_KEY_ENV: &str = "PACK_ORDER_API_KEY";
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
/// Extra attempts after a retryable transport failure.
pub const TRANSPORT_RETRIES: u32 = 2;
const BACKOFF_BASE: Duration = Duration::from_millis(250);

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider configuration invalid: {0}")]
    Config(String),
    #[error("environment variable `{0}` holding the API key is not set")]
    MissingApiKey(String),
    #[error("authentication rejected with HTTP {status}")]
    Auth { status: u16 },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("image payload for message {0} is empty")]
    EmptyImage(usize),
    #[error("no fixture left for request {fingerprint}")]
    FixtureExhausted { fingerprint: String },
    #[error("cannot read fixtures {path}: {message}")]
    Fixtures { path: PathBuf, message: String },
}

impl ProviderError {
    /// Whether the failure is worth another round trip.
    pub fn is_retryable(&self) -> bool {
        match self {
            ProviderError::Timeout { .. } | ProviderError::Transport { .. } => true,
            ProviderError::Http { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// Image bytes passed through to the model untouched.
#[derive(Clone, PartialEq, Eq)]
pub struct ImagePayload {
    pub media_type: String,
    pub data: Vec<u8>,
}

impl ImagePayload {
    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let data = std::fs::read(path)?;
        let media_type = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("png") => "image/png",
            Some("jpg") | Some("jpeg") => "image/jpeg",
            Some("webp") => "image/webp",
            Some("gif") => "image/gif",
            _ => "application/octet-stream",
        };
        Ok(Self {
            media_type: media_type.to_string(),
            data,
        })
    }

    pub fn data_url(&self) -> String {
        format!(
            "data:{};base64,{}",
            self.media_type,
            base64::engine::general_purpose::STANDARD.encode(&self.data)
        )
    }
}

impl fmt::Debug for ImagePayload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImagePayload")
            .field("media_type", &self.media_type)
            .field("bytes", &self.data.len())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    pub image: Option<ImagePayload>,
}

impl ChatMessage {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            text: text.into(),
            image: None,
        }
    }

    pub fn with_image(mut self, image: ImagePayload) -> Self {
        self.image = Some(image);
        self
    }
}

/// Hex SHA-256 over the role, text and image bytes of every message.
pub fn fingerprint(messages: &[ChatMessage]) -> String {
    let mut hasher = Sha256::new();
    for message in messages {
        hasher.update(message.role.as_str().as_bytes());
        hasher.update([0u8]);
        hasher.update((message.text.len() as u64).to_le_bytes());
        hasher.update(message.text.as_bytes());
        match &message.image {
            Some(image) => {
                hasher.update([1u8]);
                hasher.update(image.media_type.as_bytes());
                hasher.update([0u8]);
                hasher.update((image.data.len() as u64).to_le_bytes());
                hasher.update(&image.data);
            }
            None => hasher.update([0u8]),
        }
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatExchange {
    pub request: Vec<ChatMessage>,
    pub fingerprint: String,
    pub response: String,
    pub latency: Duration,
    pub usage: Option<TokenUsage>,
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatExchange, ProviderError>;

    /// Whether concurrent callers can observe different results depending on
    /// call order.
    fn order_sensitive(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Live,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
    #[serde(with = "secs")]
    pub timeout: Duration,
    pub api_key_env: String,
    pub fixtures: Option<PathBuf>,
    pub max_in_flight: usize,
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            endpoint: None,
            model: "gpt-4o".to_string(),
            temperature: 0.0,
            timeout: Duration::from_secs(60),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            fixtures: None,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ProviderError::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.max_in_flight == 0 {
            return Err(ProviderError::Config("max_in_flight must be at least 1".into()));
        }
        match self.kind {
            ProviderKind::Live => {
                if self.endpoint.as_deref().is_none_or(str::is_empty) {
                    return Err(ProviderError::Config("live provider needs an endpoint".into()));
                }
                if self.api_key_env.is_empty() {
                    return Err(ProviderError::Config("live provider needs an API key variable".into()));
                }
                if self.timeout.is_zero() {
                    return Err(ProviderError::Config("timeout must be positive".into()));
                }
            }
            ProviderKind::Mock => {
                if self.fixtures.is_none() {
                    return Err(ProviderError::Config("mock provider needs a fixtures path".into()));
                }
            }
        }
        Ok(())
    }

    /// Builds the provider described by this config.
    pub fn connect(&self) -> Result<Box<dyn ChatProvider>, ProviderError> {
        self.validate()?;
        match self.kind {
            ProviderKind::Live => Ok(Box::new(LiveProvider::from_env(self.clone())?)),
            ProviderKind::Mock => {
                let path = self.fixtures.as_deref().expect("validated");
                Ok(Box::new(MockProvider::from_file(path)?))
            }
        }
    }
}

fn check_images(messages: &[ChatMessage]) -> Result<(), ProviderError> {
    match messages
        .iter()
        .position(|m| m.image.as_ref().is_some_and(|img| img.data.is_empty()))
    {
        Some(i) => Err(ProviderError::EmptyImage(i)),
        None => Ok(()),
    }
}

/// One canned response, optionally bound to a request fingerprint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    pub response: String,
}

#[derive(Debug, Default)]
struct MockState {
    records: Vec<FixtureRecord>,
    consumed: Vec<bool>,
    positional: VecDeque<usize>,
}

/// Offline provider replaying fixtures.
///
/// A request takes the first unused record carrying its fingerprint; failing
/// that, the next unused record without a fingerprint.
#[derive(Debug)]
pub struct MockProvider {
    state: Mutex<MockState>,
}

impl MockProvider {
    pub fn new(records: Vec<FixtureRecord>) -> Self {
        let positional = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.fingerprint.is_none())
            .map(|(i, _)| i)
            .collect();
        let consumed = vec![false; records.len()];
        Self {
            state: Mutex::new(MockState {
                records,
                consumed,
                positional,
            }),
        }
    }

    pub fn from_responses<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self::new(
            responses
                .into_iter()
                .map(|r| FixtureRecord {
                    fingerprint: None,
                    response: r.into(),
                })
                .collect(),
        )
    }

    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let err = |message: String| ProviderError::Fixtures {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let records: Vec<FixtureRecord> = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        Ok(Self::new(records))
    }

    pub fn remaining(&self) -> usize {
        let state = self.state.lock().expect("mock state poisoned");
        state.consumed.iter().filter(|c| !**c).count()
    }
}

impl ChatProvider for MockProvider {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatExchange, ProviderError> {
        check_images(messages)?;
        let fp = fingerprint(messages);
        let mut state = self.state.lock().expect("mock state poisoned");
        let by_fingerprint = state
            .records
            .iter()
            .enumerate()
            .position(|(i, r)| !state.consumed[i] && r.fingerprint.as_deref() == Some(fp.as_str()));
        let index = match by_fingerprint {
            Some(i) => i,
            None => loop {
                match state.positional.pop_front() {
                    Some(i) if !state.consumed[i] => break i,
                    Some(_) => continue,
                    None => return Err(ProviderError::FixtureExhausted { fingerprint: fp }),
                }
            },
        };
        state.consumed[index] = true;
        Ok(ChatExchange {
            request: messages.to_vec(),
            fingerprint: fp,
            response: state.records[index].response.clone(),
            latency: Duration::ZERO,
            usage: None,
        })
    }

    fn order_sensitive(&self) -> bool {
        let state = self.state.lock().expect("mock state poisoned");
        !state.positional.is_empty()
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Limiter {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    fn new(permits: usize) -> Self {
        Self {
            available: Mutex::new(permits),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut available = self.available.lock().expect("limiter poisoned");
        while *available == 0 {
            available = self.freed.wait(available).expect("limiter poisoned");
        }
        *available -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().expect("limiter poisoned") += 1;
        self.0.freed.notify_one();
    }
}

/// Blocking client for an OpenAI-style `chat/completions` endpoint.
pub struct LiveProvider {
    config: ProviderConfig,
    api_key: String,
    client: reqwest::blocking::Client,
    limiter: Limiter,
    backoff: Duration,
}

impl fmt::Debug for LiveProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LiveProvider").field("config", &self.config).finish_non_exhaustive()
    }
}

impl LiveProvider {
    /// Reads the bearer token from the configured environment variable.
    pub fn from_env(config: ProviderConfig) -> Result<Self, ProviderError> {
        let key = std::env::var(&config.api_key_env)
            .map_err(|_| ProviderError::MissingApiKey(config.api_key_env.clone()))?;
        Self::with_key(config, key)
    }

    pub fn with_key(config: ProviderConfig, api_key: String) -> Result<Self, ProviderError> {
        let mut config = config;
        config.kind = ProviderKind::Live;
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        let limiter = Limiter::new(config.max_in_flight);
        Ok(Self {
            config,
            api_key,
            client,
            limiter,
            backoff: BACKOFF_BASE,
        })
    }

    /// Overrides the base delay of the exponential retry backoff.
    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.backoff = base;
        self
    }

    fn request_body(&self, messages: &[ChatMessage]) -> serde_json::Value {
        let messages: Vec<serde_json::Value> = messages
            .iter()
            .map(|m| match &m.image {
                None => serde_json::json!({ "role": m.role.as_str(), "content": m.text }),
                Some(image) => serde_json::json!({
                    "role": m.role.as_str(),
                    "content": [
                        { "type": "text", "text": m.text },
                        { "type": "image_url", "image_url": { "url": image.data_url() } }
                    ]
                }),
            })
            .collect();
        serde_json::json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        })
    }

    fn round_trip(&self, body: &serde_json::Value, attempts: u32) -> Result<(String, Option<TokenUsage>), ProviderError> {
        let endpoint = self.config.endpoint.as_deref().expect("validated");
        let response = self
            .client
            .post(endpoint)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    ProviderError::Timeout { attempts }
                } else {
                    ProviderError::Transport {
                        attempts,
                        message: e.to_string(),
                    }
                }
            })?;
        let status = response.status().as_u16();
        let text = response.text().map_err(|e| ProviderError::Transport {
            attempts,
            message: e.to_string(),
        })?;
        match status {
            401 | 403 => return Err(ProviderError::Auth { status }),
            s if s >= 400 => return Err(ProviderError::Http { status: s, body: text }),
            _ => {}
        }
        parse_completion(&text)
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
    usage: Option<TokenUsage>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: CompletionMessage,
}

#[derive(Deserialize)]
struct CompletionMessage {
    content: Option<String>,
}

fn parse_completion(body: &str) -> Result<(String, Option<TokenUsage>), ProviderError> {
    let parsed: CompletionResponse =
        serde_json::from_str(body).map_err(|e| ProviderError::MalformedResponse(e.to_string()))?;
    let content = parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| ProviderError::MalformedResponse("no message content in first choice".into()))?;
    Ok((content, parsed.usage))
}

impl ChatProvider for LiveProvider {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatExchange, ProviderError> {
        check_images(messages)?;
        let body = self.request_body(messages);
        let _permit = self.limiter.acquire();
        let started = Instant::now();
        let mut attempt = 1;
        loop {
            match self.round_trip(&body, attempt) {
                Ok((response, usage)) => {
                    return Ok(ChatExchange {
                        request: messages.to_vec(),
                        fingerprint: fingerprint(messages),
                        response,
                        latency: started.elapsed(),
                        usage,
                    })
                }
                Err(e) if e.is_retryable() && attempt <= TRANSPORT_RETRIES => {
                    std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}
