//! OpenAI-compatible chat-completion client.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::backend::{BackendError, ChatMessage, LlmBackend, Request};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_MODEL: &str = "gpt-4o-mini-2024-07-18";
pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    /// Environment variable holding the API key.
    pub api_key_env: String,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            base_url: DEFAULT_BASE_URL.to_string(),
            model: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
            timeout_secs: 120,
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Failure below the HTTP layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Timeouts and connection failures.
    Transient(String),
    Fatal(String),
}

/// Sends one JSON POST. Swappable for fault-injection tests.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, api_key: &str, body: &Value) -> Result<HttpResponse, TransportError>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Fatal(format!("http client: {e}")))?;
        Ok(HttpTransport { client })
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, api_key: &str, body: &Value) -> Result<HttpResponse, TransportError> {
        let response = self.client.post(url).bearer_auth(api_key).json(body).send().map_err(|e| {
            let message = redact(&e.to_string(), api_key);
            if e.is_timeout() || e.is_connect() || e.is_request() {
                TransportError::Transient(message)
            } else {
                TransportError::Fatal(message)
            }
        })?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|e| TransportError::Transient(redact(&e.to_string(), api_key)))?;
        Ok(HttpResponse { status, body })
    }
}

fn redact(text: &str, secret: &str) -> String {
    if secret.is_empty() {
        text.to_string()
    } else {
        text.replace(secret, "[REDACTED]")
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: String,
    transport: Box<dyn Transport>,
}

impl RemoteBackend {
    /// Reads the API key from `config.api_key_env`.
    pub fn from_env(config: RemoteConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| BackendError::Fatal(format!("environment variable {} is not set", config.api_key_env)))?;
        let transport = HttpTransport::new(Duration::from_secs(config.timeout_secs))?;
        Ok(RemoteBackend::with_transport(config, api_key, Box::new(transport)))
    }

    pub fn with_transport(config: RemoteConfig, api_key: String, transport: Box<dyn Transport>) -> Self {
        RemoteBackend { config, api_key, transport }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn request_body(&self, messages: &[ChatMessage]) -> Value {
        json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": messages,
        })
    }
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

impl LlmBackend for RemoteBackend {
    fn id(&self) -> String {
        format!("remote:{}@{}", self.config.model, self.config.temperature)
    }

    fn send(&self, request: &Request<'_>) -> Result<String, BackendError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = self.request_body(&request.messages);
        log::debug!("POST {url} ({}): {}", request.template, redact(&body.to_string(), &self.api_key));
        let response = self.transport.post_json(&url, &self.api_key, &body).map_err(|e| match e {
            TransportError::Transient(m) => BackendError::Transient(m),
            TransportError::Fatal(m) => BackendError::Fatal(m),
        })?;
        let text = redact(&response.body, &self.api_key);
        log::debug!("{} <- {}: {text}", request.template, response.status);
        match response.status {
            200..=299 => {}
            408 | 409 | 429 | 500..=599 => {
                return Err(BackendError::Transient(format!("HTTP {}: {text}", response.status)))
            }
            status => return Err(BackendError::Fatal(format!("HTTP {status}: {text}"))),
        }
        let parsed: CompletionBody = serde_json::from_str(&response.body)
            .map_err(|e| BackendError::Fatal(format!("malformed completion body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Fatal("completion without content".into()))
    }
}
