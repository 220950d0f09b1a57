//! Model client: chat-completion transport, response cache, retries, a
//! bounded in-flight gate, and the offline mock.

mod cache;
mod mock;
mod parse;

pub use cache::{CachedResponse, ResponseCache};
pub use mock::{attenuation_mmi, mock_attenuation_model, GARBLED_RESPONSE, MOCK_ENDPOINT};
pub use parse::{parse_mmi_value, parse_response, serialize_response, ParseError};

use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::Execution;
use crate::mmi::MmiLevel;
use crate::prompt::RenderedPrompt;

pub const REASK_TEXT: &str = "Respond with valid JSON only, in the format requested above.";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("model config: {0}")]
    Config(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed endpoint response: {0}")]
    BadResponse(String),
    #[error("mock model: {0}")]
    Mock(String),
    #[error("cannot read image {0}: {1}")]
    Image(String, std::io::Error),
    #[error("cache: {0}")]
    Cache(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_backoff_ms: 500,
        }
    }
}

/// Backoff ceiling regardless of attempt number.
const MAX_BACKOFF_MS: u64 = 30_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub model_id: String,
    /// Chat-completion URL, or `mock://attenuation` for the offline model.
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    pub timeout_ms: u64,
    /// Mock only: garble the answer for prompts whose hash is divisible by
    /// this number. Used for fault-injection runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mock_garble_modulus: Option<u64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            model_id: "mock-attenuation".into(),
            endpoint: MOCK_ENDPOINT.into(),
            api_key_env: None,
            temperature: 0.0,
            max_output_tokens: 1024,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
            timeout_ms: 60_000,
            mock_garble_modulus: None,
        }
    }
}

impl ModelConfig {
    pub fn is_mock(&self) -> bool {
        self.endpoint == MOCK_ENDPOINT
    }

    /// All problems, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.model_id.trim().is_empty() {
            errs.push("model.model_id is empty".into());
        }
        if !self.is_mock() {
            if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
                errs.push(format!("model.endpoint {:?} is neither http(s) nor {MOCK_ENDPOINT}", self.endpoint));
            }
            if self.api_key_env.as_deref().unwrap_or("").is_empty() {
                errs.push("model.api_key_env is required for a remote endpoint".into());
            }
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            errs.push(format!("model.temperature {} must be >= 0", self.temperature));
        }
        if self.max_in_flight < 1 {
            errs.push("model.max_in_flight must be >= 1".into());
        }
        if self.retry.max_attempts < 1 {
            errs.push("model.retry.max_attempts must be >= 1".into());
        }
        if self.mock_garble_modulus == Some(0) {
            errs.push("model.mock_garble_modulus must be >= 1".into());
        }
        errs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub zone_id: String,
    pub mmi: MmiLevel,
    pub reasoning: String,
    pub raw_response: String,
    pub model_id: String,
    pub prompt_hash: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    Transport,
    EndpointRejected,
    BadResponse,
    ParseFailed,
    MockError,
    ImageRead,
    CacheIo,
}

impl FailReason {
    pub fn code(self) -> &'static str {
        match self {
            FailReason::Transport => "transport",
            FailReason::EndpointRejected => "endpoint_rejected",
            FailReason::BadResponse => "bad_response",
            FailReason::ParseFailed => "parse_failed",
            FailReason::MockError => "mock_error",
            FailReason::ImageRead => "image_read",
            FailReason::CacheIo => "cache_io",
        }
    }

    /// Failures caused by the endpoint rather than the sample.
    pub fn is_transport(self) -> bool {
        matches!(self, FailReason::Transport | FailReason::EndpointRejected)
    }
}

impl From<&LlmError> for FailReason {
    fn from(e: &LlmError) -> Self {
        match e {
            LlmError::Transport { .. } | LlmError::Config(_) => FailReason::Transport,
            LlmError::Rejected { .. } => FailReason::EndpointRejected,
            LlmError::BadResponse(_) => FailReason::BadResponse,
            LlmError::Mock(_) => FailReason::MockError,
            LlmError::Image(..) => FailReason::ImageRead,
            LlmError::Cache(_) => FailReason::CacheIo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimFailure {
    pub sample_id: String,
    pub zone_id: String,
    pub reason: FailReason,
    pub detail: String,
}

/// One HTTP exchange as seen by the client.
#[derive(Debug, Clone)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// Sends one JSON request. `Err` means the request did not complete
/// (connection, timeout) and is retried.
pub trait Transport: Send + Sync {
    fn post(&self, url: &str, api_key: Option<&str>, body: &Value, timeout: Duration) -> Result<HttpReply, String>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| LlmError::Config(format!("http client: {e}")))?;
        Ok(Self { client })
    }
}

impl Transport for ReqwestTransport {
    fn post(&self, url: &str, api_key: Option<&str>, body: &Value, timeout: Duration) -> Result<HttpReply, String> {
        let mut req = self.client.post(url).timeout(timeout).json(body);
        if let Some(key) = api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}

/// Counting gate bounding simultaneous requests.
struct Gate {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

struct GatePass<'a>(&'a Gate);

impl Gate {
    fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn enter(&self) -> GatePass<'_> {
        let mut n = self.current.lock().expect("gate poisoned");
        while *n >= self.max {
            n = self.freed.wait(n).expect("gate poisoned");
        }
        *n += 1;
        GatePass(self)
    }
}

impl Drop for GatePass<'_> {
    fn drop(&mut self) {
        *self.0.current.lock().expect("gate poisoned") -= 1;
        self.0.freed.notify_one();
    }
}

/// Result of one `complete` call.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub raw: String,
    pub latency_ms: u64,
    pub attempts: u32,
    pub cached: bool,
}

pub struct LlmClient {
    cfg: ModelConfig,
    api_key: Option<String>,
    cache: Option<ResponseCache>,
    transport: Arc<dyn Transport>,
    gate: Gate,
    network_calls: AtomicU64,
}

fn reask_key(prompt_hash: &str) -> String {
    hex::encode(Sha256::digest(format!("{prompt_hash}:reask")))
}

fn image_part(path: &Path) -> Result<Value, LlmError> {
    let bytes = std::fs::read(path).map_err(|e| LlmError::Image(path.display().to_string(), e))?;
    let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        _ => "image/jpeg",
    };
    let data = base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(json!({"type": "image_url", "image_url": {"url": format!("data:{mime};base64,{data}")}}))
}

impl LlmClient {
    /// Reads the API key from the configured environment variable unless
    /// the endpoint is the mock.
    pub fn new(cfg: ModelConfig, cache_dir: Option<&Path>) -> Result<Self, LlmError> {
        let transport: Arc<dyn Transport> = Arc::new(ReqwestTransport::new()?);
        let api_key = if cfg.is_mock() {
            None
        } else {
            let var = cfg.api_key_env.clone().unwrap_or_default();
            Some(std::env::var(&var).map_err(|_| LlmError::Config(format!("environment variable {var} is not set")))?)
        };
        Ok(Self::with_transport(cfg, api_key, cache_dir, transport))
    }

    pub fn with_transport(cfg: ModelConfig, api_key: Option<String>, cache_dir: Option<&Path>, transport: Arc<dyn Transport>) -> Self {
        Self {
            gate: Gate::new(cfg.max_in_flight),
            cfg,
            api_key,
            cache: cache_dir.map(ResponseCache::new),
            transport,
            network_calls: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Requests sent to the transport so far (including retries).
    pub fn network_calls(&self) -> u64 {
        self.network_calls.load(Ordering::SeqCst)
    }

    fn mock_answer(&self, p: &RenderedPrompt) -> Result<String, LlmError> {
        if let Some(m) = self.cfg.mock_garble_modulus {
            let head = p.prompt_hash.get(..16).and_then(|h| u64::from_str_radix(h, 16).ok()).unwrap_or(0);
            if head % m == 0 {
                return Ok(GARBLED_RESPONSE.to_string());
            }
        }
        mock_attenuation_model(p).map_err(LlmError::Mock)
    }

    fn request_body(&self, p: &RenderedPrompt, reask_of: Option<&str>) -> Result<Value, LlmError> {
        let mut user = vec![json!({"type": "text", "text": p.user_text})];
        if let Some(path) = p.image_path() {
            user.push(image_part(path)?);
        }
        let mut messages = vec![
            json!({"role": "system", "content": p.system_text}),
            json!({"role": "user", "content": user}),
        ];
        if let Some(prev) = reask_of {
            messages.push(json!({"role": "assistant", "content": prev}));
            messages.push(json!({"role": "user", "content": REASK_TEXT}));
        }
        Ok(json!({
            "model": self.cfg.model_id,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_output_tokens,
            "messages": messages,
        }))
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ceiling = self
            .cfg
            .retry
            .base_backoff_ms
            .saturating_mul(1u64 << (attempt - 1).min(20))
            .min(MAX_BACKOFF_MS);
        Duration::from_millis(rand::thread_rng().gen_range(0..=ceiling))
    }

    fn send_with_retry(&self, body: &Value) -> Result<(String, u32), LlmError> {
        let timeout = Duration::from_millis(self.cfg.timeout_ms);
        let max = self.cfg.retry.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=max {
            let reply = {
                let _pass = self.gate.enter();
                self.network_calls.fetch_add(1, Ordering::SeqCst);
                self.transport.post(&self.cfg.endpoint, self.api_key.as_deref(), body, timeout)
            };
            match reply {
                Ok(r) if (200..300).contains(&r.status) => {
                    let v: Value = serde_json::from_str(&r.body).map_err(|e| LlmError::BadResponse(e.to_string()))?;
                    let text = v
                        .pointer("/choices/0/message/content")
                        .and_then(Value::as_str)
                        .ok_or_else(|| LlmError::BadResponse("no choices[0].message.content".into()))?;
                    return Ok((text.to_string(), attempt));
                }
                Ok(r) if r.status == 429 || r.status >= 500 => last = format!("HTTP {}", r.status),
                Ok(r) => {
                    return Err(LlmError::Rejected {
                        status: r.status,
                        body: r.body.chars().take(500).collect(),
                    })
                }
                Err(e) => last = e,
            }
            if attempt < max {
                log::debug!("attempt {attempt} failed ({last}); backing off");
                std::thread::sleep(self.backoff(attempt));
            }
        }
        Err(LlmError::Transport { attempts: max, message: last })
    }

    /// Raw answer text for `p` (or for the re-ask turn after `reask_of`),
    /// served from the cache when possible.
    pub fn complete(&self, p: &RenderedPrompt, reask_of: Option<&str>) -> Result<Completion, LlmError> {
        let key = match reask_of {
            None => p.prompt_hash.clone(),
            Some(_) => reask_key(&p.prompt_hash),
        };
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            return Ok(Completion {
                raw: hit.raw_response,
                latency_ms: hit.latency_ms,
                attempts: hit.attempts,
                cached: true,
            });
        }
        let (raw, latency_ms, attempts) = if self.cfg.is_mock() {
            // latency is recorded as zero so mock runs are reproducible
            (self.mock_answer(p)?, 0, 1)
        } else {
            let body = self.request_body(p, reask_of)?;
            let start = Instant::now();
            let (raw, attempts) = self.send_with_retry(&body)?;
            (raw, start.elapsed().as_millis() as u64, attempts)
        };
        if let Some(c) = &self.cache {
            c.put(&CachedResponse {
                key,
                model_id: self.cfg.model_id.clone(),
                raw_response: raw.clone(),
                latency_ms,
                attempts,
            })?;
        }
        Ok(Completion {
            raw,
            latency_ms,
            attempts,
            cached: false,
        })
    }

    /// Completes and parses one prompt, re-asking once on unparseable output.
    pub fn predict(&self, p: &RenderedPrompt) -> Result<Prediction, SimFailure> {
        let fail = |reason: FailReason, detail: String| SimFailure {
            sample_id: p.sample_id.clone(),
            zone_id: p.zone_id.clone(),
            reason,
            detail,
        };
        let from_err = |e: LlmError| fail(FailReason::from(&e), e.to_string());
        let first = self.complete(p, None).map_err(from_err)?;
        let (c, parsed) = match parse_response(&first.raw) {
            Ok(ok) => (first, ok),
            Err(e) => {
                log::debug!("{}: unparseable answer ({e}); re-asking", p.sample_id);
                let second = self.complete(p, Some(&first.raw)).map_err(from_err)?;
                let parsed = parse_response(&second.raw).map_err(|e2| {
                    fail(FailReason::ParseFailed, format!("first answer: {e}; re-ask: {e2}"))
                })?;
                let merged = Completion {
                    latency_ms: first.latency_ms + second.latency_ms,
                    attempts: first.attempts + second.attempts,
                    ..second
                };
                (merged, parsed)
            }
        };
        let (mmi, reasoning) = parsed;
        Ok(Prediction {
            sample_id: p.sample_id.clone(),
            zone_id: p.zone_id.clone(),
            mmi,
            reasoning,
            raw_response: c.raw,
            model_id: self.cfg.model_id.clone(),
            prompt_hash: p.prompt_hash.clone(),
            latency_ms: c.latency_ms,
            attempt_count: c.attempts,
        })
    }

    /// Runs every prompt; results are in input order. In parallel mode up to
    /// `max_in_flight` workers share the client.
    pub fn run_batch(&self, prompts: &[RenderedPrompt], exec: Execution) -> Vec<Result<Prediction, SimFailure>> {
        let workers = if exec.is_parallel() { self.cfg.max_in_flight.max(1).min(prompts.len().max(1)) } else { 1 };
        if workers == 1 {
            return prompts.iter().map(|p| self.predict(p)).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<Prediction, SimFailure>>>> = prompts.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(p) = prompts.get(i) else { break };
                    *slots[i].lock().expect("slot poisoned") = Some(self.predict(p));
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().expect("slot poisoned").expect("every slot filled"))
            .collect()
    }
}
