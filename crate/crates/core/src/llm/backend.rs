use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::template::{Bindings, TemplateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: ChatRole::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: ChatRole::Assistant, content: content.into() }
    }
}

/// One completion request: the rendered conversation plus the template and
/// bindings it came from, so scripted backends can key on them.
#[derive(Debug, Clone)]
pub struct Request<'a> {
    pub template: TemplateId,
    pub bindings: &'a Bindings,
    pub messages: Vec<ChatMessage>,
    /// 0 for the first try; incremented on each re-prompt after a parse failure.
    pub parse_attempt: u32,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    /// Worth retrying: timeouts, rate limits, 5xx responses.
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("backend failure: {0}")]
    Fatal(String),
    #[error("no fixture for template `{template}` with bindings digest {digest} (attempt {attempt})")]
    FixtureMissing { template: TemplateId, digest: String, attempt: u32 },
}

/// A source of chat completions.
pub trait LlmBackend: Send + Sync {
    /// Stable identifier used in cache keys, e.g. `remote:gpt-4o-mini`.
    fn id(&self) -> String;

    fn send(&self, request: &Request<'_>) -> Result<String, BackendError>;
}

impl fmt::Debug for dyn LlmBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LlmBackend({})", self.id())
    }
}
