//! Deterministic backends for tests and offline replays.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::backend::{BackendError, LlmBackend, Request};
use super::template::{Bindings, TemplateId};

/// One line of a fixture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub template_id: TemplateId,
    pub bindings_digest: String,
    pub response_text: String,
}

/// A pure map from `(template id, bindings digest)` to response text.
///
/// A key may carry several responses; the n-th serves parse attempt n and the
/// last one repeats. Lookups without a fixture fail with `FixtureMissing`.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    fixtures: HashMap<(TemplateId, String), Vec<String>>,
    order: Vec<(TemplateId, String)>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        ScriptedBackend::default()
    }

    pub fn insert(&mut self, template: TemplateId, bindings: &Bindings, response: impl Into<String>) {
        self.insert_digest(template, bindings.digest(), response.into());
    }

    pub fn insert_digest(&mut self, template: TemplateId, digest: String, response: String) {
        let key = (template, digest);
        if !self.fixtures.contains_key(&key) {
            self.order.push(key.clone());
        }
        self.fixtures.entry(key).or_default().push(response);
    }

    pub fn with(mut self, template: TemplateId, bindings: &Bindings, response: impl Into<String>) -> Self {
        self.insert(template, bindings, response);
        self
    }

    pub fn len(&self) -> usize {
        self.fixtures.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }

    /// Load every `*.jsonl` file of `dir` in file-name order.
    pub fn from_dir(dir: &Path) -> io::Result<Self> {
        let mut files: Vec<_> = fs::read_dir(dir)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        let mut backend = ScriptedBackend::new();
        for file in files {
            let reader = io::BufReader::new(fs::File::open(&file)?);
            for (line_no, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: FixtureRecord = serde_json::from_str(&line).map_err(|e| {
                    io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("{}:{}: {e}", file.display(), line_no + 1),
                    )
                })?;
                backend.insert_digest(record.template_id, record.bindings_digest, record.response_text);
            }
        }
        Ok(backend)
    }

    pub fn records(&self) -> Vec<FixtureRecord> {
        self.order
            .iter()
            .flat_map(|key| {
                self.fixtures[key].iter().map(move |text| FixtureRecord {
                    template_id: key.0,
                    bindings_digest: key.1.clone(),
                    response_text: text.clone(),
                })
            })
            .collect()
    }

    /// Write all fixtures, in insertion order, as one JSONL file.
    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut out = io::BufWriter::new(fs::File::create(path)?);
        for record in self.records() {
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

impl LlmBackend for ScriptedBackend {
    fn id(&self) -> String {
        "scripted".to_string()
    }

    fn send(&self, request: &Request<'_>) -> Result<String, BackendError> {
        let digest = request.bindings.digest();
        let key = (request.template, digest);
        match self.fixtures.get(&key) {
            Some(responses) => {
                let i = (request.parse_attempt as usize).min(responses.len() - 1);
                Ok(responses[i].clone())
            }
            None => Err(BackendError::FixtureMissing {
                template: request.template,
                digest: key.1,
                attempt: request.parse_attempt,
            }),
        }
    }
}

type Responder = dyn Fn(&Request<'_>) -> Result<String, BackendError> + Send + Sync;

/// A backend computed by a closure, e.g. an oracle that reads the bundle
/// being asked about from the bindings.
pub struct FnBackend {
    id: String,
    respond: Box<Responder>,
}

impl FnBackend {
    pub fn new<F>(id: impl Into<String>, respond: F) -> Self
    where
        F: Fn(&Request<'_>) -> Result<String, BackendError> + Send + Sync + 'static,
    {
        FnBackend { id: id.into(), respond: Box::new(respond) }
    }
}

impl LlmBackend for FnBackend {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn send(&self, request: &Request<'_>) -> Result<String, BackendError> {
        (self.respond)(request)
    }
}

/// Passes requests through to another backend and keeps every successful
/// response as a fixture, so the run can later be replayed offline.
pub struct RecordingBackend {
    inner: Arc<dyn LlmBackend>,
    recorded: Mutex<ScriptedBackend>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn LlmBackend>) -> Self {
        RecordingBackend { inner, recorded: Mutex::new(ScriptedBackend::new()) }
    }

    /// Everything recorded so far, replayable as a [`ScriptedBackend`].
    pub fn fixtures(&self) -> ScriptedBackend {
        self.recorded.lock().expect("recorder poisoned").clone()
    }
}

impl LlmBackend for RecordingBackend {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn send(&self, request: &Request<'_>) -> Result<String, BackendError> {
        let response = self.inner.send(request)?;
        let mut recorded = self.recorded.lock().expect("recorder poisoned");
        let key = (request.template, request.bindings.digest());
        let known = recorded.fixtures.get(&key).map_or(0, Vec::len);
        // One response per parse attempt; the first one seen wins.
        if request.parse_attempt as usize == known {
            recorded.insert_digest(key.0, key.1, response.clone());
        }
        Ok(response)
    }
}
