//! Backend-agnostic access to chat-completion models.
//!
//! [`Gateway`] renders a template, sends it through an [`LlmBackend`],
//! retries transient failures, re-prompts on unparseable output, caches
//! completions and keeps a log of every exchange.

pub mod backend;
pub mod parse;
pub mod remote;
pub mod scripted;
pub mod template;
pub mod transcript;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{BackendError, ChatMessage, ChatRole, LlmBackend, Request};
pub use parse::ParseError;
pub use remote::{RemoteBackend, RemoteConfig};
pub use scripted::{FixtureRecord, FnBackend, RecordingBackend, ScriptedBackend};
pub use template::{render, Bindings, TemplateError, TemplateId};
pub use transcript::{Channel, Role, Transcript};

/// Appended as a follow-up user turn after an unparseable reply.
pub const REPROMPT_SUFFIX: &str = "Please respond only in the required format.";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("backend unavailable for `{template}` after {attempts} attempts: {message}")]
    BackendUnavailable { template: TemplateId, attempts: u32, message: String },
    #[error("no fixture for `{template}` (bindings digest {digest}, attempt {attempt})")]
    FixtureMissing { template: TemplateId, digest: String, attempt: u32 },
    #[error("backend rejected `{template}`: {message}")]
    Fatal { template: TemplateId, message: String },
    #[error("could not parse `{template}` output after {attempts} attempts: {error}")]
    Parse { template: TemplateId, attempts: u32, error: ParseError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    /// Retries of transient transport failures per completion.
    pub max_retries: u32,
    /// Base delay before the first retry; doubles on each further retry.
    pub backoff_ms: u64,
    /// Total tries (first prompt included) before a parse failure is final.
    pub parse_attempts: u32,
    pub cache: bool,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig { max_retries: 3, backoff_ms: 0, parse_attempts: 3, cache: true }
    }
}

/// One completion as seen by the gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub backend: String,
    pub template: TemplateId,
    pub bindings_digest: String,
    pub parse_attempt: u32,
    pub messages: Vec<ChatMessage>,
    pub response: String,
    pub cached: bool,
    pub retries: u32,
}

type CacheKey = (TemplateId, String, u32, u64);

pub struct Gateway {
    backend: Arc<dyn LlmBackend>,
    backend_id: String,
    config: GatewayConfig,
    cache: Mutex<HashMap<CacheKey, String>>,
    log: Mutex<Vec<Exchange>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("backend", &self.backend_id).field("config", &self.config).finish()
    }
}

fn conversation_hash(messages: &[ChatMessage]) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for m in messages {
        (m.role as u8).hash(&mut h);
        m.content.hash(&mut h);
    }
    h.finish()
}

impl Gateway {
    pub fn new(backend: Arc<dyn LlmBackend>, config: GatewayConfig) -> Self {
        let backend_id = backend.id();
        Gateway { backend, backend_id, config, cache: Mutex::default(), log: Mutex::default() }
    }

    pub fn scripted(backend: ScriptedBackend) -> Self {
        Gateway::new(Arc::new(backend), GatewayConfig::default())
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    /// Single-turn completion of `template`.
    pub fn complete(&self, template: TemplateId, bindings: &Bindings) -> Result<String, LlmError> {
        self.complete_turn(template, bindings, &[], 0)
    }

    /// Completion of `template` as the next user turn after `prior`.
    pub fn complete_turn(
        &self,
        template: TemplateId,
        bindings: &Bindings,
        prior: &[ChatMessage],
        parse_attempt: u32,
    ) -> Result<String, LlmError> {
        let prompt = render(template, bindings)?;
        let mut messages = prior.to_vec();
        messages.push(ChatMessage::user(prompt));
        self.send(template, bindings, messages, parse_attempt)
    }

    /// Complete and parse, re-prompting on parse failures.
    ///
    /// Returns the parsed value together with the conversation including the
    /// accepted reply, so that callers can continue it.
    pub fn complete_parsed<T>(
        &self,
        template: TemplateId,
        bindings: &Bindings,
        prior: &[ChatMessage],
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<(T, Vec<ChatMessage>), LlmError> {
        let prompt = render(template, bindings)?;
        let mut messages = prior.to_vec();
        messages.push(ChatMessage::user(prompt));
        let attempts = self.config.parse_attempts.max(1);
        let mut attempt = 0;
        loop {
            let reply = self.send(template, bindings, messages.clone(), attempt)?;
            messages.push(ChatMessage::assistant(reply.clone()));
            match parse(&reply) {
                Ok(value) => return Ok((value, messages)),
                Err(error) => {
                    attempt += 1;
                    log::warn!("{template}: unparseable reply (attempt {attempt}/{attempts}): {error}");
                    if attempt >= attempts {
                        return Err(LlmError::Parse { template, attempts, error });
                    }
                    messages.push(ChatMessage::user(REPROMPT_SUFFIX));
                }
            }
        }
    }

    fn send(
        &self,
        template: TemplateId,
        bindings: &Bindings,
        messages: Vec<ChatMessage>,
        parse_attempt: u32,
    ) -> Result<String, LlmError> {
        let digest = bindings.digest();
        let key = (template, digest.clone(), parse_attempt, conversation_hash(&messages));
        if self.config.cache {
            if let Some(hit) = self.cache.lock().expect("cache lock").get(&key).cloned() {
                self.record(template, &digest, parse_attempt, messages, &hit, true, 0);
                return Ok(hit);
            }
        }
        let request = Request { template, bindings, messages, parse_attempt };
        let mut retries = 0;
        let reply = loop {
            match self.backend.send(&request) {
                Ok(text) => break text,
                Err(BackendError::Transient(message)) => {
                    if retries >= self.config.max_retries {
                        return Err(LlmError::BackendUnavailable { template, attempts: retries + 1, message });
                    }
                    retries += 1;
                    log::warn!("{template}: transient backend failure, retry {retries}: {message}");
                    if self.config.backoff_ms > 0 {
                        let delay = self.config.backoff_ms.saturating_mul(1 << (retries - 1).min(10));
                        thread::sleep(Duration::from_millis(delay));
                    }
                }
                Err(BackendError::Fatal(message)) => return Err(LlmError::Fatal { template, message }),
                Err(BackendError::FixtureMissing { template, digest, attempt }) => {
                    return Err(LlmError::FixtureMissing { template, digest, attempt })
                }
            }
        };
        if self.config.cache {
            self.cache.lock().expect("cache lock").insert(key, reply.clone());
        }
        self.record(template, &digest, parse_attempt, request.messages, &reply, false, retries);
        Ok(reply)
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        template: TemplateId,
        digest: &str,
        parse_attempt: u32,
        messages: Vec<ChatMessage>,
        response: &str,
        cached: bool,
        retries: u32,
    ) {
        self.log.lock().expect("log lock").push(Exchange {
            backend: self.backend_id.clone(),
            template,
            bindings_digest: digest.to_string(),
            parse_attempt,
            messages,
            response: response.to_string(),
            cached,
            retries,
        });
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().expect("log lock").clone()
    }

    /// Total transient-failure retries across all logged exchanges.
    pub fn total_retries(&self) -> u32 {
        self.log.lock().expect("log lock").iter().map(|e| e.retries).sum()
    }

    /// Number of completions actually sent to the backend.
    pub fn backend_calls(&self) -> usize {
        self.log.lock().expect("log lock").iter().filter(|e| !e.cached).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn answer_bindings(question: &str) -> Bindings {
        Bindings::new()
            .with("scenario_description", "market")
            .with("person_description", "Carlos")
            .with("question", question)
    }

    #[test]
    fn fixture_text_verbatim() {
        let b = answer_bindings("q");
        let g = Gateway::scripted(ScriptedBackend::new().with(TemplateId::NlAnswer, &b, "Answer: \"hi\""));
        assert_eq!(g.complete(TemplateId::NlAnswer, &b).unwrap(), "Answer: \"hi\"");
        assert_eq!(g.exchanges().len(), 1);
    }

    #[test]
    fn unbound_placeholder_fails_before_sending() {
        let calls = Arc::new(AtomicU32::new(0));
        let counter = calls.clone();
        let backend = FnBackend::new("count", move |_| {
            counter.fetch_add(1, Ordering::SeqCst);
            Ok(String::new())
        });
        let g = Gateway::new(Arc::new(backend), GatewayConfig::default());
        let err = g.complete(TemplateId::NlAnswer, &Bindings::new()).unwrap_err();
        assert!(matches!(err, LlmError::Template(_)));
        assert_eq!(calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn fixture_miss_is_typed() {
        let g = Gateway::scripted(ScriptedBackend::new());
        let err = g.complete(TemplateId::NlAnswer, &answer_bindings("q")).unwrap_err();
        assert!(matches!(err, LlmError::FixtureMissing { template: TemplateId::NlAnswer, .. }));
    }

    #[test]
    fn reprompt_recovers_from_malformed_output() {
        let b = answer_bindings("q");
        let backend = ScriptedBackend::new()
            .with(TemplateId::NlAnswer, &b, "I'd rather not say")
            .with(TemplateId::NlAnswer, &b, "Answer: \"fine\"");
        let g = Gateway::scripted(backend);
        let (answer, convo) = g.complete_parsed(TemplateId::NlAnswer, &b, &[], parse::parse_answer).unwrap();
        assert_eq!(answer, "fine");
        assert_eq!(convo.len(), 4);
        assert_eq!(convo[2].content, REPROMPT_SUFFIX);
        assert_eq!(g.exchanges().len(), 2);
    }

    #[test]
    fn parse_failure_is_final_after_three_attempts() {
        let b = answer_bindings("q");
        let g = Gateway::scripted(ScriptedBackend::new().with(TemplateId::NlAnswer, &b, "nothing"));
        let err = g.complete_parsed(TemplateId::NlAnswer, &b, &[], parse::parse_answer).unwrap_err();
        assert!(matches!(err, LlmError::Parse { attempts: 3, .. }));
        assert_eq!(g.exchanges().len(), 3);
    }

    #[test]
    fn transient_failures_are_retried() {
        let calls = Arc::new(AtomicU32::new(0));
        let counter = calls.clone();
        let backend = FnBackend::new("flaky", move |_| {
            if counter.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(BackendError::Transient("503".into()))
            } else {
                Ok("Answer: \"ok\"".into())
            }
        });
        let g = Gateway::new(Arc::new(backend), GatewayConfig::default());
        assert_eq!(g.complete(TemplateId::NlAnswer, &answer_bindings("q")).unwrap(), "Answer: \"ok\"");
        assert_eq!(g.total_retries(), 2);

        let always = FnBackend::new("down", |_| Err(BackendError::Transient("timeout".into())));
        let g = Gateway::new(Arc::new(always), GatewayConfig { max_retries: 2, ..GatewayConfig::default() });
        let err = g.complete(TemplateId::NlAnswer, &answer_bindings("q")).unwrap_err();
        assert!(matches!(err, LlmError::BackendUnavailable { attempts: 3, .. }));
    }

    #[test]
    fn cache_serves_repeats() {
        let calls = Arc::new(AtomicU32::new(0));
        let counter = calls.clone();
        let backend = FnBackend::new("count", move |_| {
            Ok(format!("Answer: \"{}\"", counter.fetch_add(1, Ordering::SeqCst)))
        });
        let backend: Arc<dyn LlmBackend> = Arc::new(backend);
        let g = Gateway::new(backend.clone(), GatewayConfig::default());
        let b = answer_bindings("q");
        let first = g.complete(TemplateId::NlAnswer, &b).unwrap();
        assert_eq!(g.complete(TemplateId::NlAnswer, &b).unwrap(), first);
        assert_eq!(g.backend_calls(), 1);
        assert_ne!(g.complete(TemplateId::NlAnswer, &b.clone().with("variant", "2")).unwrap(), first);

        let uncached = Gateway::new(backend, GatewayConfig { cache: false, ..GatewayConfig::default() });
        let a = uncached.complete(TemplateId::NlAnswer, &b).unwrap();
        assert_ne!(uncached.complete(TemplateId::NlAnswer, &b).unwrap(), a);
    }
}
