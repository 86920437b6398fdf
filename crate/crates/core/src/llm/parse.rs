//! Strict extraction of structured answers from model output.
//!
//! Every parser is total: it returns a value or a [`ParseError`]. When a
//! marker appears several times the last occurrence wins, since models often
//! reason through intermediate figures before the final line.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::bundle::Bundle;
use crate::money::Money;
use crate::scenario::Scenario;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no `{0}` line found in response")]
    NoMatch(&'static str),
    #[error("expected exactly one action keyword, found {0}")]
    ActionCount(usize),
    #[error("invalid bundle: {0}")]
    InvalidBundle(String),
    #[error("expected {expected} versions, found {found}")]
    VersionCount { expected: usize, found: usize },
}

fn regex(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("valid pattern"))
}

/// Extract the dollar amount of the last `Bundle value: $<number>` line.
pub fn parse_bundle_value(text: &str) -> Result<Money, ParseError> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = regex(&RE, r"(?i)bundle value:\s*\**\s*\\?\$\s*([0-9][0-9,]*(?:\.[0-9]+)?|\.[0-9]+)");
    re.captures_iter(text)
        .filter_map(|c| Money::parse_dollars(&c[1]))
        .last()
        .ok_or(ParseError::NoMatch("Bundle value: $"))
}

/// Extract the quoted text of the last `Answer: "..."` line.
pub fn parse_answer(text: &str) -> Result<String, ParseError> {
    last_quoted(text, "Answer").ok_or(ParseError::NoMatch("Answer: \""))
}

/// Extract the quoted text of the last `Question: "..."` line.
pub fn parse_question(text: &str) -> Result<String, ParseError> {
    last_quoted(text, "Question").ok_or(ParseError::NoMatch("Question: \""))
}

fn last_quoted(text: &str, marker: &str) -> Option<String> {
    let re = Regex::new(&format!(r#"(?s){marker}:\s*["“](.*?)["”]"#)).expect("valid pattern");
    re.captures_iter(text)
        .map(|c| c[1].trim().to_string())
        .filter(|s| !s.is_empty())
        .last()
}

/// The proxy's chosen action in the decision prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    TargetBundle(Bundle),
    Check,
    Happy,
}

/// Uppercase code-like tokens, e.g. `IPAD12` or `APPLE_PENCIL`.
fn code_tokens(text: &str) -> impl Iterator<Item = &str> {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(&RE, r"\b[A-Z][A-Z0-9_]+\b").find_iter(text).map(|m| m.as_str())
}

/// Recognize exactly one of `TARGET_BUNDLE`, `CHECK` or `HAPPY`.
///
/// For `TARGET_BUNDLE` the good codes following the keyword (up to the end of
/// that line) are validated against `scenario`.
pub fn parse_decision(text: &str, scenario: &Scenario) -> Result<Decision, ParseError> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = regex(&RE, r"\b(TARGET_BUNDLE|CHECK|HAPPY)\b");
    let kinds: BTreeSet<&str> = re.find_iter(text).map(|m| m.as_str()).collect();
    if kinds.len() != 1 {
        return Err(ParseError::ActionCount(kinds.len()));
    }
    match *kinds.iter().next().expect("one kind") {
        "HAPPY" => Ok(Decision::Happy),
        "CHECK" => Ok(Decision::Check),
        _ => {
            let start = text.rfind("TARGET_BUNDLE").expect("keyword present") + "TARGET_BUNDLE".len();
            let rest = &text[start..];
            let line = rest.trim_start_matches(|c: char| c == ':' || c == '`' || c.is_whitespace());
            let line = line.lines().next().unwrap_or("");
            let mut bundle = Bundle::EMPTY;
            for token in code_tokens(line) {
                match scenario.index_of(token) {
                    Some(i) if bundle.contains(i) => {
                        return Err(ParseError::InvalidBundle(format!("{token} exceeds available quantity")))
                    }
                    Some(i) => bundle = bundle.with(i),
                    None if token == "X" => {}
                    None => return Err(ParseError::InvalidBundle(format!("unknown good code {token}"))),
                }
            }
            if bundle.is_empty() {
                return Err(ParseError::InvalidBundle("TARGET_BUNDLE names no goods".into()));
            }
            Ok(Decision::TargetBundle(bundle))
        }
    }
}

/// Split a `Version 1: ... Version 2: ...` response into its versions.
pub fn parse_versions(text: &str, expected: usize) -> Result<Vec<String>, ParseError> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = regex(&RE, r"(?mi)^\W*version\s*(\d+)\s*\W*:\**");
    let marks: Vec<(usize, usize)> = re.find_iter(text).map(|m| (m.start(), m.end())).collect();
    let versions: Vec<String> = marks
        .iter()
        .enumerate()
        .map(|(i, &(_, body_start))| {
            let end = marks.get(i + 1).map_or(text.len(), |m| m.0);
            text[body_start..end].trim().to_string()
        })
        .filter(|v| !v.is_empty())
        .collect();
    if versions.len() < expected {
        return Err(ParseError::VersionCount { expected, found: versions.len() });
    }
    Ok(versions.into_iter().take(expected).collect())
}

/// Bundles proposed in an equivalence-query response, at most `limit`.
///
/// Each line naming at least one valid good code is one proposal. A reply that
/// proposes nothing must say `EQUIVALENT`.
pub fn parse_bundle_list(text: &str, scenario: &Scenario, limit: usize) -> Result<Vec<Bundle>, ParseError> {
    let mut out: Vec<Bundle> = Vec::new();
    for line in text.lines() {
        let bundle = code_tokens(line)
            .filter_map(|t| scenario.index_of(t))
            .fold(Bundle::EMPTY, Bundle::with);
        if !bundle.is_empty() && !out.contains(&bundle) {
            out.push(bundle);
            if out.len() == limit {
                break;
            }
        }
    }
    if out.is_empty() && !text.contains("EQUIVALENT") {
        return Err(ParseError::NoMatch("bundle list or EQUIVALENT"));
    }
    Ok(out)
}
