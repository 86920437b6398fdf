//! Simulated people backed by a language model.
//!
//! A person is defined by a natural-language seed. Its XOR bid is built once,
//! eagerly, by valuing every bundle in ascending cardinality and keeping only
//! values that respect free disposal; value and demand queries are then
//! answered from that cached bid. Natural-language and equivalence queries go
//! back to the model.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bundle::Bundle;
use crate::demand::{respond_to_demand, DemandResponse, PriceFunction};
use crate::llm::parse::{parse_answer, parse_bundle_list, parse_bundle_value, parse_versions};
use crate::llm::{Bindings, Gateway, LlmError, TemplateId};
use crate::money::Money;
use crate::person::{check_universe, filter_counterexamples, PersonChannel, PersonError, QueryCounts, EQUIVALENCE_LIMIT};
use crate::proxies::format_atoms;
use crate::scenario::Scenario;
use crate::xor::XorBid;

/// Step-1 candidates to choose from.
pub const SEED_VERSIONS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedProvenance {
    pub scenario: String,
    pub tranche: usize,
    pub index: usize,
    pub rng_choice: usize,
    pub backend: String,
}

/// A person's preference description with the outputs that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seed {
    pub text: String,
    /// Raw output of each of the four generation steps.
    pub stages: Vec<String>,
    pub provenance: SeedProvenance,
}

impl Seed {
    pub fn id(&self) -> String {
        format!("{}-t{}-p{}", self.provenance.scenario, self.provenance.tranche, self.provenance.index)
    }
}

fn scenario_bindings(scenario: &Scenario) -> Bindings {
    Bindings::new()
        .with("scenario_description", scenario.description_text.clone())
        .with("item_descriptions", scenario.describe_bundle(Bundle::full(scenario.num_goods())))
}

/// Run the four-step seed pipeline.
///
/// Step 1 asks for three versions and keeps version `rng_choice % 3`; steps
/// 2 and 3 each rewrite the running text; step 4 writes a passage on how
/// other bundles are valued, which is appended to the step-3 text.
pub fn generate_seed(
    scenario: &Scenario,
    gateway: &Gateway,
    rng_choice: usize,
    tranche: usize,
    index: usize,
) -> Result<Seed, LlmError> {
    // Tranche and index only distinguish otherwise identical requests.
    let base = scenario_bindings(scenario).with("tranche", tranche.to_string()).with("index", index.to_string());
    let mut raw = Vec::with_capacity(4);
    let (versions, convo) =
        gateway.complete_parsed(TemplateId::SeedStep1, &base, &[], |t| parse_versions(t, SEED_VERSIONS))?;
    raw.push(convo.last().map(|m| m.content.clone()).unwrap_or_default());
    let mut text = versions[rng_choice % SEED_VERSIONS].clone();
    for template in [TemplateId::SeedStep2, TemplateId::SeedStep3, TemplateId::SeedStep4] {
        let bindings = base.clone().with("seed_text", text.clone());
        let output = gateway.complete(template, &bindings)?;
        raw.push(output.clone());
        text = if template == TemplateId::SeedStep4 {
            format!("{}\n{}", text.trim_end_matches(['\r', '\n']), output.trim_matches(['\r', '\n']))
        } else {
            output.trim_matches(['\r', '\n']).to_string()
        };
    }
    Ok(Seed {
        text,
        stages: raw,
        provenance: SeedProvenance {
            scenario: scenario.name.clone(),
            tranche,
            index,
            rng_choice: rng_choice % SEED_VERSIONS,
            backend: gateway.backend_id().to_string(),
        },
    })
}

/// Bindings of the bundle-valuation prompt.
pub fn valuation_bindings(scenario: &Scenario, seed_text: &str, bundle: Bundle) -> Bindings {
    Bindings::new()
        .with("scenario_description", scenario.description_text.clone())
        .with("person_description", seed_text)
        .with("bundle_description", scenario.describe_bundle(bundle))
        .with("bundle_size", bundle.len().to_string())
        .with("bundle_codes", scenario.bundle_label(bundle))
}

/// One fresh model valuation of `bundle`; `variant` separates repetitions.
pub fn value_bundle(
    scenario: &Scenario,
    gateway: &Gateway,
    seed_text: &str,
    bundle: Bundle,
    variant: Option<&str>,
) -> Result<Money, LlmError> {
    let mut bindings = valuation_bindings(scenario, seed_text, bundle);
    if let Some(variant) = variant {
        bindings.insert("variant", variant);
    }
    let (value, _) = gateway.complete_parsed(TemplateId::BundleValue, &bindings, &[], parse_bundle_value)?;
    Ok(value)
}

/// Value every bundle (2^n completions) in ascending cardinality and keep the
/// values that exceed what smaller bundles already imply.
pub fn build_cached_bid(seed: &Seed, scenario: &Scenario, gateway: &Gateway) -> Result<XorBid, LlmError> {
    let mut bid = XorBid::new(scenario.num_goods());
    for bundle in Bundle::by_cardinality(scenario.num_goods()) {
        let value = value_bundle(scenario, gateway, &seed.text, bundle, None)?;
        bid = bid.insert_atomic(bundle, value);
    }
    Ok(bid)
}

/// A simulated person.
#[derive(Debug, Clone)]
pub struct SimPerson {
    scenario: Arc<Scenario>,
    seed: Seed,
    cached_bid: XorBid,
    gateway: Arc<Gateway>,
    revealed: Vec<(Bundle, Money)>,
    counts: QueryCounts,
}

impl SimPerson {
    /// Build the cached bid eagerly; fails without a partial cache.
    pub fn build(scenario: Arc<Scenario>, seed: Seed, gateway: Arc<Gateway>) -> Result<Self, LlmError> {
        let cached_bid = build_cached_bid(&seed, &scenario, &gateway)?;
        Ok(SimPerson::from_cached(scenario, seed, cached_bid, gateway))
    }

    /// Restore a person from a previously built bid.
    ///
    /// # Panics
    /// If the bid's universe does not match the scenario.
    pub fn from_cached(scenario: Arc<Scenario>, seed: Seed, cached_bid: XorBid, gateway: Arc<Gateway>) -> Self {
        assert_eq!(cached_bid.goods(), scenario.num_goods(), "cached bid and scenario disagree on the goods");
        SimPerson { scenario, seed, cached_bid, gateway, revealed: Vec::new(), counts: QueryCounts::default() }
    }

    pub fn seed(&self) -> &Seed {
        &self.seed
    }

    pub fn cached_bid(&self) -> &XorBid {
        &self.cached_bid
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    fn revealed_values(&self) -> String {
        if self.revealed.is_empty() {
            return "(none yet)".to_string();
        }
        self.revealed
            .iter()
            .map(|(b, v)| format!("- {}: {}", self.scenario.bundle_label(*b), v))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl PersonChannel for SimPerson {
    fn goods(&self) -> usize {
        self.scenario.num_goods()
    }

    fn answer_value(&mut self, bundle: Bundle) -> Result<Money, PersonError> {
        check_universe(bundle, self.goods())?;
        self.counts.value += 1;
        let value = self.cached_bid.induced_value(bundle);
        if !self.revealed.iter().any(|(b, _)| *b == bundle) {
            self.revealed.push((bundle, value));
        }
        Ok(value)
    }

    fn answer_demand(&mut self, prices: &PriceFunction, offered: Bundle) -> Result<DemandResponse, PersonError> {
        check_universe(offered, self.goods())?;
        self.counts.demand += 1;
        Ok(respond_to_demand(&self.cached_bid, prices, offered))
    }

    fn answer_natural(&mut self, question: &str) -> Result<String, PersonError> {
        self.counts.natural += 1;
        let bindings = Bindings::new()
            .with("scenario_description", self.scenario.description_text.clone())
            .with("person_description", self.seed.text.clone())
            .with("question", question);
        let (answer, _) = self.gateway.complete_parsed(TemplateId::NlAnswer, &bindings, &[], parse_answer)?;
        Ok(answer)
    }

    fn answer_equivalence(
        &mut self,
        hypothesis: &XorBid,
        tolerance: Money,
        num_calls: u32,
    ) -> Result<Vec<(Bundle, Money)>, PersonError> {
        self.counts.equivalence += 1;
        let bindings = Bindings::new()
            .with("scenario_description", self.scenario.description_text.clone())
            .with("person_description", self.seed.text.clone())
            .with("hypothesis_atoms", format_atoms(&self.scenario, hypothesis))
            .with("revealed_values", self.revealed_values())
            .with("epsilon", tolerance.to_string())
            .with("num_calls", num_calls.to_string())
            .with("item_codes", self.scenario.code_list());
        let scenario = Arc::clone(&self.scenario);
        let (proposals, _) = self.gateway.complete_parsed(TemplateId::Equivalence, &bindings, &[], |t| {
            parse_bundle_list(t, &scenario, EQUIVALENCE_LIMIT)
        })?;
        Ok(filter_counterexamples(&self.cached_bid, hypothesis, tolerance, proposals))
    }

    fn counts(&self) -> QueryCounts {
        self.counts
    }
}
