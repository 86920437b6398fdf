//! LLM-driven proxies.
//!
//! All four designs keep a candidate bid built only from the person's direct
//! answers, plus a transcript of everything said so far.
//!
//! - `Vd1` asks the model what to do next (target a bundle, check demand, or
//!   declare the person happy) and reports the candidate.
//! - `Vd2` does the same but reports the candidate topped up with discounted
//!   model-inferred values.
//! - `Nvd` is `Vd2` preceded by one model-written natural-language question.
//! - `Hybrid` runs `Nvd` for the first `alpha` calls, then switches to the
//!   demand-query learner while geometrically decaying the inferred values.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bundle::Bundle;
use crate::demand::PriceFunction;
use crate::dnf::dnf_handle_message;
use crate::engine::{Proxy, ProxyError};
use crate::llm::parse::{parse_bundle_value, parse_decision, parse_question, Decision};
use crate::llm::{Bindings, Channel, ChatMessage, Gateway, Role, TemplateId, Transcript};
use crate::money::{Money, Ratio};
use crate::person::{PersonChannel, PersonError, QueryCounts};
use crate::scenario::Scenario;
use crate::xor::XorBid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyKind {
    Xor,
    Vd1,
    Vd2,
    Nvd,
    Hybrid,
}

impl ProxyKind {
    pub const ALL: [ProxyKind; 5] = [ProxyKind::Xor, ProxyKind::Vd1, ProxyKind::Vd2, ProxyKind::Nvd, ProxyKind::Hybrid];

    pub fn as_str(self) -> &'static str {
        match self {
            ProxyKind::Xor => "xor",
            ProxyKind::Vd1 => "vd1",
            ProxyKind::Vd2 => "vd2",
            ProxyKind::Nvd => "nvd",
            ProxyKind::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for ProxyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProxyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProxyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown proxy `{s}` (expected one of xor, vd1, vd2, nvd, hybrid)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProxyParams {
    /// Discount applied to inferred values when reporting.
    pub epsilon: Ratio,
    /// Calls handled by the language model before the hybrid switches over.
    pub alpha: u64,
    /// Per-call decay of inferred values after the switchover.
    pub delta: Ratio,
    pub gamma_refresh_period: u64,
}

impl Default for ProxyParams {
    fn default() -> Self {
        ProxyParams { epsilon: Ratio::new(3, 4), alpha: 10, delta: Ratio::new(19, 20), gamma_refresh_period: 5 }
    }
}

/// Model-inferred, undiscounted bundle values, possibly decayed.
///
/// Decay is tracked as a step count so that the k-th decayed value is the
/// exact `base · δ^k` rounded once, rather than an accumulation of roundings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceFunction {
    base: BTreeMap<Bundle, Money>,
    pub computed_at_call: u64,
    decay: Ratio,
    decay_steps: u32,
}

impl InferenceFunction {
    pub fn new(base: BTreeMap<Bundle, Money>, computed_at_call: u64) -> Self {
        InferenceFunction { base, computed_at_call, decay: Ratio::ONE, decay_steps: 0 }
    }

    pub fn from_fn(goods: usize, mut f: impl FnMut(Bundle) -> Money) -> Self {
        InferenceFunction::new(Bundle::all(goods).map(|b| (b, f(b))).collect(), 0)
    }

    pub fn get(&self, bundle: Bundle) -> Option<Money> {
        self.base.get(&bundle).map(|v| v.scale_pow(self.decay, self.decay_steps))
    }

    pub fn base(&self, bundle: Bundle) -> Option<Money> {
        self.base.get(&bundle).copied()
    }

    pub fn bundles(&self) -> impl Iterator<Item = Bundle> + '_ {
        self.base.keys().copied()
    }

    pub fn decay_steps(&self) -> u32 {
        self.decay_steps
    }

    /// Multiply every value by `factor` (which must stay fixed across calls).
    pub fn decay(&mut self, factor: Ratio) {
        debug_assert!(self.decay_steps == 0 || self.decay == factor);
        self.decay = factor;
        self.decay_steps = self.decay_steps.saturating_add(1);
    }

    /// Whether every discounted value has reached zero.
    pub fn is_spent(&self, epsilon: Ratio) -> bool {
        self.base.keys().all(|&b| self.get(b).unwrap_or(Money::ZERO).scale(epsilon) == Money::ZERO)
    }
}

/// Top the candidate up with discounted inferred values.
///
/// Bundles are visited by ascending cardinality; an atom `(b, ε·γ(b))` is
/// added where it exceeds the value induced so far. Atoms of the candidate
/// are never touched, and an added atom's value is capped by every candidate
/// atom containing `b`, so reported values on candidate atoms stay exact.
pub fn vd2_infer_bid(candidate: &XorBid, gamma: &InferenceFunction, epsilon: Ratio) -> XorBid {
    let mut inferred = candidate.clone();
    for bundle in Bundle::by_cardinality(candidate.goods()) {
        if candidate.has_atom(bundle) {
            continue;
        }
        let Some(value) = gamma.get(bundle) else { continue };
        let cap = candidate
            .atoms()
            .iter()
            .filter(|a| bundle.is_subset_of(a.bundle))
            .map(|a| a.value)
            .min();
        let mut value = value.scale(epsilon);
        if let Some(cap) = cap {
            value = value.min(cap);
        }
        if inferred.induced_value(bundle) < value {
            inferred = inferred.insert_atomic(bundle, value);
        }
    }
    inferred
}

/// Bullet list of a bid's non-empty atoms.
pub fn format_atoms(scenario: &Scenario, bid: &XorBid) -> String {
    let lines: Vec<String> = bid
        .atoms()
        .iter()
        .filter(|a| !a.bundle.is_empty())
        .map(|a| format!("- {}: {}", scenario.bundle_label(a.bundle), a.value))
        .collect();
    if lines.is_empty() {
        "(none yet)".to_string()
    } else {
        lines.join("\n")
    }
}

/// Bullet list of the priced bundles plus the price of `offered`.
pub fn format_prices(scenario: &Scenario, prices: &PriceFunction, offered: Bundle) -> String {
    let lines: Vec<String> = prices
        .base
        .atoms()
        .iter()
        .filter(|a| !a.bundle.is_empty())
        .map(|a| format!("- {}: {}", scenario.bundle_label(a.bundle), prices.price(a.bundle)))
        .collect();
    if lines.is_empty() {
        return "(no prices yet: the auction is just starting)".to_string();
    }
    format!("{}\nPrice of the allocated bundle: {}", lines.join("\n"), prices.price(offered))
}

fn format_allocation(scenario: &Scenario, offered: Bundle) -> String {
    if offered.is_empty() {
        "(no bundle allocated)".to_string()
    } else {
        scenario.bundle_label(offered)
    }
}

/// One LLM-driven proxy serving one person.
pub struct LlmProxy<P> {
    kind: ProxyKind,
    params: ProxyParams,
    person: P,
    scenario: Arc<Scenario>,
    gateway: Arc<Gateway>,
    candidate: XorBid,
    transcript: Transcript,
    gamma: Option<InferenceFunction>,
    targeted: Vec<Bundle>,
    call_count: u64,
}

impl<P> fmt::Debug for LlmProxy<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmProxy")
            .field("kind", &self.kind)
            .field("call_count", &self.call_count)
            .field("candidate", &self.candidate)
            .finish_non_exhaustive()
    }
}

impl<P: PersonChannel> LlmProxy<P> {
    /// # Panics
    /// If `kind` is `Xor` (use [`crate::dnf::DnfProxy`]) or the person's
    /// universe does not match the scenario.
    pub fn new(kind: ProxyKind, params: ProxyParams, person: P, scenario: Arc<Scenario>, gateway: Arc<Gateway>) -> Self {
        assert!(kind != ProxyKind::Xor, "the xor proxy is DnfProxy");
        assert_eq!(person.goods(), scenario.num_goods(), "person and scenario disagree on the goods");
        let candidate = XorBid::new(scenario.num_goods());
        LlmProxy {
            kind,
            params,
            person,
            scenario,
            gateway,
            candidate,
            transcript: Transcript::new(),
            gamma: None,
            targeted: Vec::new(),
            call_count: 0,
        }
    }

    pub fn kind(&self) -> ProxyKind {
        self.kind
    }

    pub fn candidate(&self) -> &XorBid {
        &self.candidate
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn gamma(&self) -> Option<&InferenceFunction> {
        self.gamma.as_ref()
    }

    /// Install an inference function directly, e.g. from an oracle.
    pub fn set_gamma(&mut self, gamma: InferenceFunction) {
        self.gamma = Some(gamma);
    }

    pub fn call_count(&self) -> u64 {
        self.call_count
    }

    pub fn person(&self) -> &P {
        &self.person
    }

    /// The bid this proxy reports right now.
    pub fn reported_bid(&self) -> XorBid {
        match (&self.gamma, self.kind) {
            (_, ProxyKind::Vd1) | (None, _) => self.candidate.clone(),
            (Some(gamma), _) => vd2_infer_bid(&self.candidate, gamma, self.params.epsilon),
        }
    }

    /// Whether the current call is handled by the demand-query learner.
    pub fn is_switched(&self) -> bool {
        self.kind == ProxyKind::Hybrid && self.call_count > self.params.alpha
    }

    fn gamma_due(&self) -> bool {
        let period = self.params.gamma_refresh_period.max(1);
        (self.call_count - 1).is_multiple_of(period)
    }

    fn query_value(&mut self, bundle: Bundle) -> Result<Money, PersonError> {
        let label = self.scenario.bundle_label(bundle);
        self.transcript.push(Role::ProxyQuery, Channel::Value, format!("What is your value for {label}?"));
        let value = self.person.answer_value(bundle)?;
        self.transcript.push(Role::PersonAnswer, Channel::Value, value.to_string());
        self.candidate = std::mem::replace(&mut self.candidate, XorBid::new(0)).insert_atomic(bundle, value);
        Ok(value)
    }

    fn query_demand(&mut self, prices: &PriceFunction, offered: Bundle) -> Result<Bundle, PersonError> {
        let label = self.scenario.bundle_label(offered);
        self.transcript.push(
            Role::ProxyQuery,
            Channel::Demand,
            format!("At the current prices, are you happy with {label} at {}?", prices.price(offered)),
        );
        let response = self.person.answer_demand(prices, offered)?;
        let answer = if response.satisfied {
            "Yes.".to_string()
        } else {
            format!("No, I would rather have {}.", self.scenario.bundle_label(response.bundle))
        };
        self.transcript.push(Role::PersonAnswer, Channel::Demand, answer);
        Ok(if response.satisfied { offered } else { response.bundle })
    }

    fn ask_question(&mut self) -> Result<(), ProxyError> {
        let bindings = Bindings::new()
            .with("scenario_description", self.scenario.description_text.clone())
            .with("history", self.transcript.history())
            .with("primary_history", self.transcript.primary_history());
        let (question, _) =
            self.gateway.complete_parsed(TemplateId::ProxyNextQuestion, &bindings, &[], parse_question)?;
        self.transcript.push(Role::ProxyQuery, Channel::Natural, question.clone());
        let answer = self.person.answer_natural(&question)?;
        self.transcript.push(Role::PersonAnswer, Channel::Natural, answer);
        Ok(())
    }

    fn decide(&mut self, offered: Bundle, prices: &PriceFunction) -> Result<Decision, ProxyError> {
        let part1 = Bindings::new()
            .with("scenario_description", self.scenario.description_text.clone())
            .with("hypothesis_atoms", format_atoms(&self.scenario, &self.candidate))
            .with("prices", format_prices(&self.scenario, prices, offered))
            .with("allocation", format_allocation(&self.scenario, offered))
            .with("history", self.transcript.history());
        let thinking = self.gateway.complete(TemplateId::ProxyDecisionPart1, &part1)?;
        let prior = [
            ChatMessage::user(crate::llm::render(TemplateId::ProxyDecisionPart1, &part1).map_err(crate::llm::LlmError::from)?),
            ChatMessage::assistant(thinking),
        ];
        // The follow-up prompt is the same every time; keying it on the first
        // part's bindings keeps scripted fixtures and cache entries distinct.
        let part2 = Bindings::new().with("item_codes", self.scenario.item_codes()).with("context", part1.digest());
        let scenario = Arc::clone(&self.scenario);
        let (decision, _) =
            self.gateway.complete_parsed(TemplateId::ProxyDecisionPart2, &part2, &prior, |t| parse_decision(t, &scenario))?;
        Ok(decision)
    }

    /// The language-model decision round shared by all LLM designs.
    fn decision_round(&mut self, offered: Bundle, prices: &PriceFunction) -> Result<bool, ProxyError> {
        let mut decision = self.decide(offered, prices)?;
        if let Decision::TargetBundle(target) = decision {
            if self.targeted.contains(&target) {
                log::info!("target {target:?} was already queried; checking demand instead");
                decision = Decision::Check;
            }
        }
        match decision {
            Decision::Happy => Ok(true),
            Decision::TargetBundle(target) => {
                self.targeted.push(target);
                self.query_value(target)?;
                Ok(false)
            }
            Decision::Check => {
                let demanded = self.query_demand(prices, offered)?;
                if demanded == offered {
                    Ok(true)
                } else {
                    self.query_value(demanded)?;
                    Ok(false)
                }
            }
        }
    }

    /// Recompute inferred values on every bundle outside the candidate atoms.
    pub fn refresh_gamma(&mut self) -> Result<(), ProxyError> {
        let history = self.transcript.history();
        let primary = self.transcript.primary_history();
        let mut values = BTreeMap::new();
        for bundle in Bundle::by_cardinality(self.scenario.num_goods()) {
            if self.candidate.has_atom(bundle) {
                continue;
            }
            let bindings = Bindings::new()
                .with("scenario_description", self.scenario.description_text.clone())
                .with("history", history.clone())
                .with("primary_history", primary.clone())
                .with("bundle_description", self.scenario.describe_bundle(bundle))
                .with("bundle_codes", self.scenario.bundle_label(bundle));
            let (value, _) =
                self.gateway.complete_parsed(TemplateId::ProxyValueInfer, &bindings, &[], parse_bundle_value)?;
            values.insert(bundle, value);
        }
        self.gamma = Some(InferenceFunction::new(values, self.call_count));
        Ok(())
    }

    fn note_offer(&mut self, offered: Bundle, prices: &PriceFunction) {
        let text = if offered.is_empty() && prices.base.len() <= 1 {
            "The auction is starting; nothing is allocated yet.".to_string()
        } else {
            format!(
                "Allocated {} at a price of {}.",
                format_allocation(&self.scenario, offered),
                prices.price(offered)
            )
        };
        self.transcript.push(Role::AuctioneerMsg, Channel::Engine, text);
    }
}

impl<P: PersonChannel> Proxy for LlmProxy<P> {
    fn goods(&self) -> usize {
        self.scenario.num_goods()
    }

    fn handle_message(&mut self, offered: Bundle, prices: &PriceFunction) -> Result<(bool, XorBid), ProxyError> {
        self.call_count += 1;
        self.note_offer(offered, prices);
        let flag = if self.is_switched() {
            if let Some(gamma) = self.gamma.as_mut() {
                gamma.decay(self.params.delta);
            }
            let candidate = std::mem::replace(&mut self.candidate, XorBid::new(0));
            let before = self.person.counts();
            let result = dnf_handle_message(&mut self.person, candidate.clone(), offered, prices);
            let (flag, next) = match result {
                Ok(r) => r,
                Err(e) => {
                    self.candidate = candidate;
                    return Err(e.into());
                }
            };
            let after = self.person.counts();
            self.transcript.push(
                Role::ProxyQuery,
                Channel::Demand,
                format!(
                    "Demand check on {} ({} value queries).",
                    self.scenario.bundle_label(offered),
                    after.value - before.value
                ),
            );
            self.candidate = next;
            flag
        } else {
            if self.call_count == 1 && matches!(self.kind, ProxyKind::Nvd | ProxyKind::Hybrid) {
                self.ask_question()?;
            }
            let flag = self.decision_round(offered, prices)?;
            if self.kind != ProxyKind::Vd1 && self.gamma_due() {
                self.refresh_gamma()?;
            }
            flag
        };
        let reported = self.reported_bid();
        self.transcript.push(Role::ProxyBid, Channel::Engine, format_atoms(&self.scenario, &reported).replace('\n', "; "));
        Ok((flag, reported))
    }

    fn counts(&self) -> QueryCounts {
        self.person.counts()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{BackendError, FnBackend, GatewayConfig, Request};
    use crate::person::ScriptedPerson;
    use crate::xor::tests::arb_bid;
    use proptest::prelude::*;

    fn electronics() -> Arc<Scenario> {
        Arc::new(Scenario::shipped("electronics").unwrap())
    }

    fn codes(scenario: &Scenario, codes: &[&str]) -> Bundle {
        scenario.bundle_from_codes(codes).unwrap()
    }

    /// A model that answers each template with a canned reply and values
    /// inferred bundles from `gamma`.
    fn model(
        scenario: Arc<Scenario>,
        decisions: Vec<&'static str>,
        gamma: impl Fn(Bundle) -> Money + Send + Sync + 'static,
    ) -> Arc<Gateway> {
        let decisions = std::sync::Mutex::new(decisions.into_iter());
        let backend = FnBackend::new("test-model", move |r: &Request<'_>| match r.template {
            TemplateId::ProxyDecisionPart1 => Ok("Thinking it over.".into()),
            TemplateId::ProxyDecisionPart2 => {
                Ok(decisions.lock().unwrap().next().unwrap_or("HAPPY").to_string())
            }
            TemplateId::ProxyNextQuestion => Ok("Question: \"Which item matters most to you?\"".into()),
            TemplateId::ProxyValueInfer => {
                let label = r.bindings.get("bundle_codes").unwrap();
                let codes: Vec<&str> = label.split(", ").collect();
                let bundle = scenario.bundle_from_codes(&codes).unwrap();
                let v = gamma(bundle);
                Ok(format!("Bundle value: ${}.{:02}", v.cents() / 100, v.cents() % 100))
            }
            other => Err(BackendError::Fatal(format!("unexpected template {other}"))),
        });
        Arc::new(Gateway::new(Arc::new(backend), GatewayConfig { cache: false, ..GatewayConfig::default() }))
    }

    #[test]
    fn vd1_happy_asks_nothing() {
        let s = electronics();
        let person = ScriptedPerson::new(XorBid::new(6));
        let mut proxy = LlmProxy::new(ProxyKind::Vd1, ProxyParams::default(), person, s.clone(), model(s, vec!["HAPPY"], |_| Money::ZERO));
        let (flag, bid) = proxy.handle_message(Bundle::EMPTY, &PriceFunction::zero(6)).unwrap();
        assert!(flag);
        assert_eq!(bid, XorBid::new(6));
        assert_eq!(proxy.interactions(), 0);
    }

    #[test]
    fn vd1_target_adds_atom() {
        let s = electronics();
        let ipad = codes(&s, &["IPAD12"]);
        let truth = XorBid::new(6).insert_atomic(ipad, Money::from_dollars(600));
        let gateway = model(s.clone(), vec!["Action: TARGET_BUNDLE: IPAD12"], |_| Money::ZERO);
        let mut proxy = LlmProxy::new(ProxyKind::Vd1, ProxyParams::default(), ScriptedPerson::new(truth), s, gateway);
        let (flag, bid) = proxy.handle_message(Bundle::EMPTY, &PriceFunction::zero(6)).unwrap();
        assert!(!flag);
        assert_eq!(bid.induced_value(ipad), Money::from_dollars(600));
        assert!(bid.has_atom(ipad));
        assert_eq!(proxy.counts().value, 1);
        assert!(proxy.transcript().history().contains("IPAD12"));
    }

    #[test]
    fn vd1_check_confirms_satisfaction() {
        let s = electronics();
        let ipad = codes(&s, &["IPAD12"]);
        let truth = XorBid::new(6).insert_atomic(ipad, Money::from_dollars(600));
        let prices = crate::wdp::lindahl_prices(&truth, Money::ZERO);
        let gateway = model(s.clone(), vec!["CHECK"], |_| Money::ZERO);
        let mut proxy = LlmProxy::new(ProxyKind::Vd1, ProxyParams::default(), ScriptedPerson::new(truth), s, gateway);
        let (flag, _) = proxy.handle_message(ipad, &prices).unwrap();
        assert!(flag);
        assert_eq!(proxy.counts(), QueryCounts { demand: 1, ..QueryCounts::default() });
    }

    #[test]
    fn vd1_check_learns_demanded_bundle() {
        let s = electronics();
        let ipad = codes(&s, &["IPAD12"]);
        let truth = XorBid::new(6).insert_atomic(ipad, Money::from_dollars(600));
        let gateway = model(s.clone(), vec!["CHECK"], |_| Money::ZERO);
        let mut proxy = LlmProxy::new(ProxyKind::Vd1, ProxyParams::default(), ScriptedPerson::new(truth), s, gateway);
        let (flag, bid) = proxy.handle_message(Bundle::EMPTY, &PriceFunction::zero(6)).unwrap();
        assert!(!flag);
        assert!(bid.has_atom(ipad));
        assert_eq!(proxy.counts(), QueryCounts { demand: 1, value: 1, ..QueryCounts::default() });
    }

    #[test]
    fn repeated_target_falls_back_to_check() {
        let s = electronics();
        let ipad = codes(&s, &["IPAD12"]);
        let truth = XorBid::new(6).insert_atomic(ipad, Money::from_dollars(600));
        let gateway = model(s.clone(), vec!["TARGET_BUNDLE: IPAD12", "TARGET_BUNDLE: IPAD12"], |_| Money::ZERO);
        let mut proxy = LlmProxy::new(ProxyKind::Vd1, ProxyParams::default(), ScriptedPerson::new(truth.clone()), s, gateway);
        proxy.handle_message(Bundle::EMPTY, &PriceFunction::zero(6)).unwrap();
        let prices = crate::wdp::lindahl_prices(&truth, Money::ZERO);
        let (flag, _) = proxy.handle_message(ipad, &prices).unwrap();
        assert!(flag);
        assert_eq!(proxy.counts().demand, 1);
    }

    #[test]
    fn infer_bid_examples() {
        let g0 = Bundle::singleton(0);
        let g01 = Bundle::from_indices([0, 1]);
        let eps = Ratio::new(3, 4);
        let none = InferenceFunction::from_fn(2, |_| Money::ZERO);
        assert_eq!(vd2_infer_bid(&XorBid::new(2), &none, eps), XorBid::new(2));

        let gamma = InferenceFunction::from_fn(2, |b| if b == g0 { Money::from_dollars(100) } else { Money::ZERO });
        let inferred = vd2_infer_bid(&XorBid::new(2), &gamma, eps);
        assert!(inferred.has_atom(g0));
        assert_eq!(inferred.induced_value(g0), Money::from_dollars(75));

        let candidate = XorBid::new(2).insert_atomic(g0, Money::from_dollars(80));
        let gamma = InferenceFunction::from_fn(2, |b| if b == g01 { Money::from_dollars(100) } else { Money::ZERO });
        assert_eq!(vd2_infer_bid(&candidate, &gamma, eps), candidate);
    }

    #[test]
    fn inferred_atoms_never_lift_candidate_atoms() {
        let g1 = Bundle::singleton(1);
        let g01 = Bundle::from_indices([0, 1]);
        let candidate = XorBid::new(2).insert_atomic(g01, Money::from_dollars(80));
        let gamma = InferenceFunction::from_fn(2, |b| if b == g1 { Money::from_dollars(120) } else { Money::ZERO });
        let inferred = vd2_infer_bid(&candidate, &gamma, Ratio::new(3, 4));
        assert_eq!(inferred.induced_value(g01), Money::from_dollars(80));
        assert_eq!(inferred.induced_value(g1), Money::from_dollars(80));
    }

    #[test]
    fn gamma_refresh_schedule() {
        let s = electronics();
        let refreshes = Arc::new(std::sync::Mutex::new(Vec::new()));
        let seen = refreshes.clone();
        let scenario = s.clone();
        let calls = Arc::new(std::sync::atomic::AtomicU64::new(0));
        let counter = calls.clone();
        let backend = FnBackend::new("schedule", move |r: &Request<'_>| match r.template {
            TemplateId::ProxyDecisionPart1 => {
                counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                Ok(String::new())
            }
            TemplateId::ProxyDecisionPart2 => Ok("HAPPY".into()),
            TemplateId::ProxyValueInfer => {
                let call = counter.load(std::sync::atomic::Ordering::SeqCst);
                let mut seen = seen.lock().unwrap();
                if seen.last() != Some(&call) {
                    seen.push(call);
                }
                let _ = &scenario;
                Ok("Bundle value: $1".into())
            }
            _ => Err(BackendError::Fatal("unexpected".into())),
        });
        let gateway = Arc::new(Gateway::new(Arc::new(backend), GatewayConfig::default()));
        let mut proxy = LlmProxy::new(ProxyKind::Vd2, ProxyParams::default(), ScriptedPerson::new(XorBid::new(6)), s, gateway);
        for _ in 0..12 {
            let (flag, _) = proxy.handle_message(Bundle::EMPTY, &PriceFunction::zero(6)).unwrap();
            assert!(flag);
        }
        assert_eq!(*refreshes.lock().unwrap(), vec![1, 6, 11]);
    }

    #[test]
    fn vd2_reports_discounted_truth() {
        let s = electronics();
        let truth = XorBid::from_atoms(
            6,
            [
                (codes(&s, &["APPLEPENCILPRO"]), Money::from_dollars(120)),
                (codes(&s, &["IPAD12", "APPLEPENCILPRO"]), Money::from_dollars(720)),
            ],
        );
        let oracle = truth.clone();
        let gateway = model(s.clone(), vec!["HAPPY"], move |b| oracle.induced_value(b));
        let mut proxy = LlmProxy::new(ProxyKind::Vd2, ProxyParams::default(), ScriptedPerson::new(truth.clone()), s, gateway);
        let (flag, bid) = proxy.handle_message(Bundle::EMPTY, &PriceFunction::zero(6)).unwrap();
        assert!(flag);
        for b in Bundle::all(6) {
            assert_eq!(bid.induced_value(b), truth.induced_value(b).scale(Ratio::new(3, 4)), "{b:?}");
        }
    }

    #[test]
    fn nvd_asks_one_question_first() {
        let s = electronics();
        let question = "Which item matters most to you?";
        let person = ScriptedPerson::new(XorBid::new(6)).with_answer(question, "The Apple Pencil Pro, for about $120.");
        let gateway = model(s.clone(), vec!["CHECK", "HAPPY"], |_| Money::ZERO);
        let mut proxy = LlmProxy::new(ProxyKind::Nvd, ProxyParams::default(), person, s, gateway);
        proxy.handle_message(Bundle::EMPTY, &PriceFunction::zero(6)).unwrap();
        let events = proxy.transcript().events();
        let first_query = events.iter().find(|e| e.role == Role::ProxyQuery).unwrap();
        assert_eq!(first_query.channel, Channel::Natural);
        let primary = proxy.transcript().primary_history();
        assert!(primary.contains(question) && primary.contains("Apple Pencil Pro, for about $120"));
        proxy.handle_message(Bundle::EMPTY, &PriceFunction::zero(6)).unwrap();
        assert_eq!(proxy.counts().natural, 1);
    }

    #[test]
    fn hybrid_switches_after_alpha() {
        let s = electronics();
        let parts1 = Arc::new(std::sync::atomic::AtomicU64::new(0));
        let counter = parts1.clone();
        let backend = FnBackend::new("switch", move |r: &Request<'_>| match r.template {
            TemplateId::ProxyDecisionPart1 => {
                counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                Ok(String::new())
            }
            TemplateId::ProxyDecisionPart2 => Ok("HAPPY".into()),
            TemplateId::ProxyNextQuestion => Ok("Question: \"?\"".into()),
            TemplateId::ProxyValueInfer => Ok("Bundle value: $100".into()),
            _ => Err(BackendError::Fatal("unexpected".into())),
        });
        let gateway = Arc::new(Gateway::new(Arc::new(backend), GatewayConfig::default()));
        let mut proxy = LlmProxy::new(ProxyKind::Hybrid, ProxyParams::default(), ScriptedPerson::new(XorBid::new(6)), s, gateway);
        for call in 1..=10 {
            proxy.handle_message(Bundle::EMPTY, &PriceFunction::zero(6)).unwrap();
            assert_eq!(parts1.load(std::sync::atomic::Ordering::SeqCst), call);
            assert_eq!(proxy.counts().demand, 0);
        }
        let gamma_before = proxy.gamma().unwrap().get(Bundle::singleton(0)).unwrap();
        assert_eq!(gamma_before, Money::from_dollars(100));
        proxy.handle_message(Bundle::EMPTY, &PriceFunction::zero(6)).unwrap();
        assert_eq!(parts1.load(std::sync::atomic::Ordering::SeqCst), 10);
        assert_eq!(proxy.counts().demand, 1);
        assert_eq!(proxy.gamma().unwrap().get(Bundle::singleton(0)).unwrap(), Money::from_dollars(95));
    }

    #[test]
    fn decay_tracks_exact_geometric_values() {
        let mut gamma = InferenceFunction::from_fn(1, |_| Money::from_dollars(100));
        let delta = Ratio::new(19, 20);
        for k in 1..=200u32 {
            gamma.decay(delta);
            let exact = 10_000.0 * 0.95f64.powi(k as i32);
            let got = gamma.get(Bundle::singleton(0)).unwrap().cents() as f64;
            assert!((got - exact).abs() <= 1.0, "k={k}: {got} vs {exact}");
        }
        assert!(gamma.is_spent(Ratio::new(3, 4)));
    }

    proptest! {
        #[test]
        fn reported_bid_is_faithful_on_candidate_atoms(
            candidate in arb_bid(4, 5),
            gamma_values in proptest::collection::vec(0u64..200_000, 16),
        ) {
            let gamma = InferenceFunction::from_fn(4, |b| Money::from_cents(gamma_values[b.bits() as usize]));
            let eps = Ratio::new(3, 4);
            let inferred = vd2_infer_bid(&candidate, &gamma, eps);
            prop_assert!(inferred.is_canonical());
            for atom in candidate.atoms() {
                prop_assert_eq!(inferred.induced_value(atom.bundle), atom.value);
            }
            for b in Bundle::all(4) {
                let closure = Bundle::all(4)
                    .filter(|c| c.is_subset_of(b))
                    .map(|c| gamma.get(c).unwrap().scale(eps))
                    .max()
                    .unwrap();
                prop_assert!(inferred.induced_value(b) >= candidate.induced_value(b));
                prop_assert!(inferred.induced_value(b) <= candidate.induced_value(b).max(closure));
            }
        }

        #[test]
        fn discount_bound_for_monotone_gamma(candidate in arb_bid(4, 5), truth in arb_bid(4, 6)) {
            let gamma = InferenceFunction::from_fn(4, |b| truth.induced_value(b));
            let eps = Ratio::new(3, 4);
            let inferred = vd2_infer_bid(&candidate, &gamma, eps);
            for b in Bundle::all(4) {
                if !candidate.has_atom(b) {
                    let bound = candidate.induced_value(b).max(gamma.get(b).unwrap().scale(eps));
                    prop_assert!(inferred.induced_value(b) <= bound);
                }
            }
        }
    }
}
