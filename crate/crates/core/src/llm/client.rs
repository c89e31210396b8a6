use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    /// OpenAI-style `POST {base_url}/chat/completions`.
    #[default]
    Openai,
    /// Anthropic-style `POST {base_url}/messages`.
    Anthropic,
    /// Fixed answer, no network.
    Mock,
    /// Answers `[0.9]` for labelled outliers and `[0.1]` otherwise, no network.
    OracleMock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmEndpointConfig {
    pub provider: Provider,
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API token.
    pub auth_token_env_var: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub request_timeout_s: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub max_concurrent_requests: usize,
    pub cache_dir: Option<PathBuf>,
    /// Character budget of one combine prompt.
    pub combine_char_budget: usize,
    /// Answer returned by the `mock` provider.
    pub mock_answer: String,
}

impl Default for LlmEndpointConfig {
    fn default() -> Self {
        LlmEndpointConfig {
            provider: Provider::Openai,
            base_url: "https://api.openai.com/v1".into(),
            model_name: "gpt-3.5-turbo-16k-0613".into(),
            auth_token_env_var: "OPENAI_API_KEY".into(),
            temperature: 0.0,
            max_output_tokens: 1024,
            request_timeout_s: 120,
            max_retries: 3,
            backoff_base_ms: 500,
            max_concurrent_requests: 2,
            cache_dir: None,
            combine_char_budget: 200_000,
            mock_answer: "[0.5]".into(),
        }
    }
}

impl LlmEndpointConfig {
    pub fn from_toml(text: &str) -> crate::Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| crate::Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.max_concurrent_requests == 0 {
            return Err(crate::Error::Config("max_concurrent_requests must be at least 1".into()));
        }
        if self.combine_char_budget == 0 {
            return Err(crate::Error::Config("combine_char_budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    /// Worth retrying: timeouts, connection failures, 429 and 5xx.
    Transient(String),
    Auth(u16),
    Fatal(String),
}

pub trait ChatTransport: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, TransportError>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    provider: Provider,
    base_url: String,
    token: String,
}

impl HttpTransport {
    /// Reads the token from the configured environment variable.
    pub fn from_config(cfg: &LlmEndpointConfig) -> Result<Self, LlmError> {
        let token = std::env::var(&cfg.auth_token_env_var).map_err(|_| LlmError::MissingToken(cfg.auth_token_env_var.clone()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.request_timeout_s))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(HttpTransport { client, provider: cfg.provider, base_url: cfg.base_url.trim_end_matches('/').to_string(), token })
    }
}

fn tokens(v: &Value, key: &str) -> u64 {
    v.get(key).and_then(Value::as_u64).unwrap_or(0)
}

impl ChatTransport for HttpTransport {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let messages = json!([{ "role": "user", "content": req.prompt }]);
        let builder = match self.provider {
            Provider::Anthropic => self
                .client
                .post(format!("{}/messages", self.base_url))
                .header("x-api-key", &self.token)
                .header("anthropic-version", "2023-06-01")
                .json(&json!({ "model": req.model, "messages": messages, "temperature": req.temperature, "max_tokens": req.max_tokens })),
            _ => self
                .client
                .post(format!("{}/chat/completions", self.base_url))
                .bearer_auth(&self.token)
                .json(&json!({ "model": req.model, "messages": messages, "temperature": req.temperature, "max_tokens": req.max_tokens })),
        };
        let resp = builder.send().map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 401 || status == 403 {
            return Err(TransportError::Auth(status));
        }
        let body = resp.text().map_err(|e| TransportError::Transient(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(TransportError::Transient(format!("HTTP {status}: {body}")));
        }
        if status >= 400 {
            return Err(TransportError::Fatal(format!("HTTP {status}: {body}")));
        }
        let v: Value = serde_json::from_str(&body).map_err(|e| TransportError::Fatal(format!("bad response body: {e}")))?;
        let usage = v.get("usage").cloned().unwrap_or(Value::Null);
        let (text, input_tokens, output_tokens) = match self.provider {
            Provider::Anthropic => (
                v.pointer("/content/0/text").and_then(Value::as_str),
                tokens(&usage, "input_tokens"),
                tokens(&usage, "output_tokens"),
            ),
            _ => (
                v.pointer("/choices/0/message/content").and_then(Value::as_str),
                tokens(&usage, "prompt_tokens"),
                tokens(&usage, "completion_tokens"),
            ),
        };
        let text = text.ok_or_else(|| TransportError::Fatal("response has no message text".into()))?;
        Ok(ChatResponse { text: text.to_string(), input_tokens, output_tokens })
    }
}

/// Same answer for every prompt.
pub struct MockTransport {
    pub answer: String,
}

impl ChatTransport for MockTransport {
    fn complete(&self, _req: &ChatRequest) -> Result<ChatResponse, TransportError> {
        Ok(ChatResponse { text: self.answer.clone(), input_tokens: 0, output_tokens: 0 })
    }
}

/// Answers looked up by exact prompt text.
pub struct TableTransport {
    pub answers: HashMap<String, String>,
    pub fallback: Option<String>,
}

impl ChatTransport for TableTransport {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let text = self
            .answers
            .get(&req.prompt)
            .or(self.fallback.as_ref())
            .ok_or_else(|| TransportError::Fatal("no canned answer for prompt".into()))?;
        Ok(ChatResponse { text: text.clone(), input_tokens: 0, output_tokens: 0 })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheEntry {
    request: ChatRequest,
    template_version: String,
    raw_response: String,
    input_tokens: u64,
    output_tokens: u64,
    timestamp: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub response: ChatResponse,
    pub latency_ms: u64,
    pub cached: bool,
}

pub struct LlmClient {
    pub config: LlmEndpointConfig,
    transport: Box<dyn ChatTransport>,
    calls: AtomicUsize,
    cache_lock: Mutex<()>,
}

impl LlmClient {
    pub fn new(config: LlmEndpointConfig, transport: Box<dyn ChatTransport>) -> Self {
        LlmClient { config, transport, calls: AtomicUsize::new(0), cache_lock: Mutex::new(()) }
    }

    /// HTTP or fixed-answer client per `config.provider`. The oracle mock needs
    /// labels and is built by the detection runner instead.
    pub fn from_config(config: LlmEndpointConfig) -> Result<Self, LlmError> {
        let transport: Box<dyn ChatTransport> = match config.provider {
            Provider::Openai | Provider::Anthropic => Box::new(HttpTransport::from_config(&config)?),
            Provider::Mock => Box::new(MockTransport { answer: config.mock_answer.clone() }),
            Provider::OracleMock => {
                return Err(LlmError::Transport("oracle mock needs labels; use the detection runner".into()))
            }
        };
        Ok(LlmClient::new(config, transport))
    }

    /// Requests that reached the transport (cache misses, retries included).
    pub fn network_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn cache_key(&self, prompt: &str, template_version: &str) -> String {
        let mut buf = Vec::new();
        for part in [self.config.model_name.as_str(), template_version, prompt] {
            buf.extend_from_slice(part.as_bytes());
            buf.push(0);
        }
        crate::io::sha256_hex(&buf)
    }

    fn cache_path(&self, key: &str) -> Option<PathBuf> {
        self.config.cache_dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    fn cache_read(&self, key: &str) -> Option<CacheEntry> {
        let text = std::fs::read_to_string(self.cache_path(key)?).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn cache_write(&self, key: &str, entry: &CacheEntry) -> Result<(), LlmError> {
        let Some(path) = self.cache_path(key) else { return Ok(()) };
        let _guard = self.cache_lock.lock().unwrap_or_else(|e| e.into_inner());
        let text = serde_json::to_string_pretty(entry).map_err(|e| LlmError::Cache(e.to_string()))?;
        let tmp = path.with_extension("json.tmp");
        crate::io::write_file(&tmp, text.as_bytes()).map_err(|e| LlmError::Cache(e.to_string()))?;
        std::fs::rename(&tmp, &path).map_err(|e| LlmError::Cache(e.to_string()))
    }

    /// Cached completion with retries and exponential backoff on transient failures.
    pub fn complete(&self, prompt: &str, template_version: &str) -> Result<Completion, LlmError> {
        let key = self.cache_key(prompt, template_version);
        if let Some(hit) = self.cache_read(&key) {
            let response = ChatResponse { text: hit.raw_response, input_tokens: hit.input_tokens, output_tokens: hit.output_tokens };
            return Ok(Completion { response, latency_ms: 0, cached: true });
        }
        let req = ChatRequest {
            model: self.config.model_name.clone(),
            prompt: prompt.to_string(),
            temperature: self.config.temperature,
            max_tokens: self.config.max_output_tokens,
        };
        let started = Instant::now();
        let mut attempt = 0;
        let response = loop {
            self.calls.fetch_add(1, Ordering::SeqCst);
            match self.transport.complete(&req) {
                Ok(r) => break r,
                Err(TransportError::Auth(status)) => return Err(LlmError::Auth { status }),
                Err(TransportError::Fatal(m)) => return Err(LlmError::Transport(m)),
                Err(TransportError::Transient(m)) => {
                    if attempt >= self.config.max_retries {
                        return Err(LlmError::Transport(format!("gave up after {} attempts: {m}", attempt + 1)));
                    }
                    log::warn!("transient llm failure (attempt {}): {m}", attempt + 1);
                    std::thread::sleep(Duration::from_millis(self.config.backoff_base_ms << attempt.min(16)));
                    attempt += 1;
                }
            }
        };
        let latency_ms = started.elapsed().as_millis() as u64;
        let entry = CacheEntry {
            request: req,
            template_version: template_version.to_string(),
            raw_response: response.text.clone(),
            input_tokens: response.input_tokens,
            output_tokens: response.output_tokens,
            timestamp: chrono::Utc::now().timestamp(),
        };
        self.cache_write(&key, &entry)?;
        Ok(Completion { response, latency_ms, cached: false })
    }
}
