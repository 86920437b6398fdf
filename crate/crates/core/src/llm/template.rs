//! The prompt template catalog and placeholder rendering.
//!
//! Template bodies live in `templates/*.txt` and use `{{name}}` placeholders.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    SeedStep1,
    SeedStep2,
    SeedStep3,
    SeedStep4,
    BundleValue,
    NlAnswer,
    Equivalence,
    ProxyValueInfer,
    ProxyNextQuestion,
    ProxyDecisionPart1,
    ProxyDecisionPart2,
}

impl TemplateId {
    pub const ALL: [TemplateId; 11] = [
        TemplateId::SeedStep1,
        TemplateId::SeedStep2,
        TemplateId::SeedStep3,
        TemplateId::SeedStep4,
        TemplateId::BundleValue,
        TemplateId::NlAnswer,
        TemplateId::Equivalence,
        TemplateId::ProxyValueInfer,
        TemplateId::ProxyNextQuestion,
        TemplateId::ProxyDecisionPart1,
        TemplateId::ProxyDecisionPart2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::SeedStep1 => "seed_step1",
            TemplateId::SeedStep2 => "seed_step2",
            TemplateId::SeedStep3 => "seed_step3",
            TemplateId::SeedStep4 => "seed_step4",
            TemplateId::BundleValue => "bundle_value",
            TemplateId::NlAnswer => "nl_answer",
            TemplateId::Equivalence => "equivalence",
            TemplateId::ProxyValueInfer => "proxy_value_infer",
            TemplateId::ProxyNextQuestion => "proxy_next_question",
            TemplateId::ProxyDecisionPart1 => "proxy_decision_part1",
            TemplateId::ProxyDecisionPart2 => "proxy_decision_part2",
        }
    }

    pub fn body(self) -> &'static str {
        match self {
            TemplateId::SeedStep1 => include_str!("../../templates/seed_step1.txt"),
            TemplateId::SeedStep2 => include_str!("../../templates/seed_step2.txt"),
            TemplateId::SeedStep3 => include_str!("../../templates/seed_step3.txt"),
            TemplateId::SeedStep4 => include_str!("../../templates/seed_step4.txt"),
            TemplateId::BundleValue => include_str!("../../templates/bundle_value.txt"),
            TemplateId::NlAnswer => include_str!("../../templates/nl_answer.txt"),
            TemplateId::Equivalence => include_str!("../../templates/equivalence.txt"),
            TemplateId::ProxyValueInfer => include_str!("../../templates/proxy_value_infer.txt"),
            TemplateId::ProxyNextQuestion => include_str!("../../templates/proxy_next_question.txt"),
            TemplateId::ProxyDecisionPart1 => include_str!("../../templates/proxy_decision_part1.txt"),
            TemplateId::ProxyDecisionPart2 => include_str!("../../templates/proxy_decision_part2.txt"),
        }
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(self) -> Vec<&'static str> {
        let mut names = Vec::new();
        for segment in segments(self.body()) {
            if let Segment::Placeholder(name) = segment {
                if !names.contains(&name) {
                    names.push(name);
                }
            }
        }
        names
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template `{template}` placeholder `{name}` is unbound")]
    Unbound { template: TemplateId, name: String },
}

/// Named values substituted into a template.
///
/// Extra keys that the template does not use are allowed; they still take
/// part in the digest so that otherwise identical requests can be told apart.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bindings(BTreeMap<String, String>);

impl Bindings {
    pub fn new() -> Self {
        Bindings::default()
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.0.insert(key.to_string(), value.into());
        self
    }

    pub fn insert(&mut self, key: &str, value: impl Into<String>) {
        self.0.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// Hex SHA-256 of the canonical (key-sorted) JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(&self.0).expect("string map serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

enum Segment<'a> {
    Text(&'a str),
    Placeholder(&'a str),
}

fn segments(body: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) if is_name(&after[..end]) => {
                out.push(Segment::Text(&rest[..start]));
                out.push(Segment::Placeholder(&after[..end]));
                rest = &after[end + 2..];
            }
            _ => {
                out.push(Segment::Text(&rest[..start + 2]));
                rest = after;
            }
        }
    }
    out.push(Segment::Text(rest));
    out
}

fn is_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Substitute every placeholder of `template`; fails on the first unbound one.
pub fn render(template: TemplateId, bindings: &Bindings) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.body().len() + 256);
    for segment in segments(template.body()) {
        match segment {
            Segment::Text(text) => out.push_str(text),
            Segment::Placeholder(name) => match bindings.get(name) {
                Some(value) => out.push_str(value),
                None => {
                    return Err(TemplateError::Unbound { template, name: name.to_string() })
                }
            },
        }
    }
    Ok(out)
}
