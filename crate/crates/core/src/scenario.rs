//! Auction scenarios: the goods on sale and their natural-language description.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{Bundle, MAX_GOODS};
use crate::money::Money;
use crate::xor::XorBid;

const ELECTRONICS: &str = include_str!("../scenarios/electronics.json");
const PRESERVES: &str = include_str!("../scenarios/preserves.json");
const TRANSPORTATION: &str = include_str!("../scenarios/transportation.json");

/// Names of the scenarios shipped with the crate.
pub const SHIPPED_SCENARIOS: [&str; 3] = ["electronics", "preserves", "transportation"];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}`")]
    Unknown(String),
    #[error("scenario has {0} goods; between 1 and {MAX_GOODS} are supported")]
    GoodCount(usize),
    #[error("good code `{0}` must be a non-empty uppercase token")]
    BadCode(String),
    #[error("duplicate good code `{0}`")]
    DuplicateCode(String),
    #[error("unknown good code `{0}`")]
    UnknownCode(String),
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Good {
    pub code: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
}

/// A validated scenario; good indices are positions in `goods`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub description_text: String,
    pub goods: Vec<Good>,
}

impl Scenario {
    pub fn shipped(name: &str) -> Result<Scenario, ScenarioError> {
        let text = match name.to_ascii_lowercase().as_str() {
            "electronics" => ELECTRONICS,
            "preserves" => PRESERVES,
            "transportation" => TRANSPORTATION,
            _ => return Err(ScenarioError::Unknown(name.to_string())),
        };
        Scenario::from_json(text)
    }

    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        Scenario::from_json(&std::fs::read_to_string(path)?)
    }

    /// Resolve a shipped scenario name or a path to a scenario file.
    pub fn resolve(name_or_path: &str) -> Result<Scenario, ScenarioError> {
        match Scenario::shipped(name_or_path) {
            Err(ScenarioError::Unknown(_)) if Path::new(name_or_path).exists() => {
                Scenario::load(Path::new(name_or_path))
            }
            other => other,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.goods.is_empty() || self.goods.len() > MAX_GOODS {
            return Err(ScenarioError::GoodCount(self.goods.len()));
        }
        let mut seen = HashSet::new();
        for good in &self.goods {
            let ok = !good.code.is_empty()
                && good.code.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
                && good.code.starts_with(|c: char| c.is_ascii_uppercase());
            if !ok {
                return Err(ScenarioError::BadCode(good.code.clone()));
            }
            if !seen.insert(good.code.as_str()) {
                return Err(ScenarioError::DuplicateCode(good.code.clone()));
            }
        }
        Ok(())
    }

    pub fn num_goods(&self) -> usize {
        self.goods.len()
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.goods.iter().position(|g| g.code == code)
    }

    pub fn bundle_from_codes<S: AsRef<str>>(&self, codes: &[S]) -> Result<Bundle, ScenarioError> {
        codes.iter().try_fold(Bundle::EMPTY, |acc, code| {
            let code = code.as_ref();
            self.index_of(code)
                .map(|i| acc.with(i))
                .ok_or_else(|| ScenarioError::UnknownCode(code.to_string()))
        })
    }

    /// Good codes of `bundle`, sorted alphabetically.
    pub fn bundle_codes(&self, bundle: Bundle) -> Vec<String> {
        let mut codes: Vec<String> = bundle.goods().map(|g| self.goods[g].code.clone()).collect();
        codes.sort();
        codes
    }

    /// Codes of `bundle` in good-index order, for prompts and logs.
    pub fn bundle_label(&self, bundle: Bundle) -> String {
        if bundle.is_empty() {
            return "(empty bundle)".to_string();
        }
        bundle.goods().map(|g| self.goods[g].code.as_str()).collect::<Vec<_>>().join(", ")
    }

    /// One line per good, used as the bundle description in prompts.
    pub fn describe_bundle(&self, bundle: Bundle) -> String {
        if bundle.is_empty() {
            return "(no items)".to_string();
        }
        bundle
            .goods()
            .map(|g| {
                let good = &self.goods[g];
                format!("- {} (code: {}), quantity 1: {}", good.name, good.code, good.description)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Every good code with its available quantity (always 1).
    pub fn item_codes(&self) -> String {
        self.goods.iter().map(|g| format!("{}: 1", g.code)).collect::<Vec<_>>().join("\n")
    }

    pub fn code_list(&self) -> String {
        self.goods.iter().map(|g| g.code.as_str()).collect::<Vec<_>>().join(", ")
    }

    pub fn bid_record(&self, bid: &XorBid) -> BidRecord {
        BidRecord {
            atoms: bid
                .atoms()
                .iter()
                .map(|a| AtomRecord { bundle: self.bundle_codes(a.bundle), value_cents: a.value.cents() })
                .collect(),
        }
    }

    pub fn bid_from_record(&self, record: &BidRecord) -> Result<XorBid, ScenarioError> {
        let atoms = record
            .atoms
            .iter()
            .map(|a| Ok((self.bundle_from_codes(&a.bundle)?, Money::from_cents(a.value_cents))))
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        Ok(XorBid::from_atoms(self.num_goods(), atoms))
    }
}

/// Serialized atom: bundle as a sorted list of good codes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub bundle: Vec<String>,
    pub value_cents: u64,
}

/// Serialized XOR bid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BidRecord {
    pub atoms: Vec<AtomRecord>,
}
