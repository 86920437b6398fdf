//! The query interface between a proxy and the person it represents.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::Bundle;
use crate::demand::{respond_to_demand, DemandResponse, PriceFunction};
use crate::llm::LlmError;
use crate::money::Money;
use crate::xor::XorBid;

/// Most counterexamples an equivalence query returns.
pub const EQUIVALENCE_LIMIT: usize = 5;

#[derive(Debug, Error)]
pub enum PersonError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("bundle {bundle:?} is outside the {goods}-good universe")]
    Universe { bundle: Bundle, goods: usize },
}

/// Interactions per query kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCounts {
    pub value: u64,
    pub demand: u64,
    pub natural: u64,
    pub equivalence: u64,
}

impl QueryCounts {
    pub fn total(&self) -> u64 {
        self.value + self.demand + self.natural + self.equivalence
    }
}

/// A person answering value, demand, natural-language and equivalence queries.
///
/// Each answered query counts as exactly one interaction.
pub trait PersonChannel {
    fn goods(&self) -> usize;

    fn answer_value(&mut self, bundle: Bundle) -> Result<Money, PersonError>;

    fn answer_demand(&mut self, prices: &PriceFunction, offered: Bundle) -> Result<DemandResponse, PersonError>;

    fn answer_natural(&mut self, question: &str) -> Result<String, PersonError>;

    /// Bundles where `hypothesis` is off by more than `tolerance`, with their
    /// true values. Empty means equivalent within tolerance.
    fn answer_equivalence(
        &mut self,
        hypothesis: &XorBid,
        tolerance: Money,
        num_calls: u32,
    ) -> Result<Vec<(Bundle, Money)>, PersonError>;

    fn counts(&self) -> QueryCounts;

    fn interactions(&self) -> u64 {
        self.counts().total()
    }
}

impl<P: PersonChannel + ?Sized> PersonChannel for Box<P> {
    fn goods(&self) -> usize {
        (**self).goods()
    }
    fn answer_value(&mut self, bundle: Bundle) -> Result<Money, PersonError> {
        (**self).answer_value(bundle)
    }
    fn answer_demand(&mut self, prices: &PriceFunction, offered: Bundle) -> Result<DemandResponse, PersonError> {
        (**self).answer_demand(prices, offered)
    }
    fn answer_natural(&mut self, question: &str) -> Result<String, PersonError> {
        (**self).answer_natural(question)
    }
    fn answer_equivalence(
        &mut self,
        hypothesis: &XorBid,
        tolerance: Money,
        num_calls: u32,
    ) -> Result<Vec<(Bundle, Money)>, PersonError> {
        (**self).answer_equivalence(hypothesis, tolerance, num_calls)
    }
    fn counts(&self) -> QueryCounts {
        (**self).counts()
    }
}

pub(crate) fn check_universe(bundle: Bundle, goods: usize) -> Result<(), PersonError> {
    if bundle.fits(goods) {
        Ok(())
    } else {
        Err(PersonError::Universe { bundle, goods })
    }
}

/// Keep the proposals whose hypothesis error exceeds `tolerance`, excluding
/// bundles that already are hypothesis atoms. Returns true values.
pub fn filter_counterexamples(
    truth: &XorBid,
    hypothesis: &XorBid,
    tolerance: Money,
    proposals: impl IntoIterator<Item = Bundle>,
) -> Vec<(Bundle, Money)> {
    let mut out: Vec<(Bundle, Money)> = Vec::new();
    for bundle in proposals {
        if hypothesis.has_atom(bundle) || out.iter().any(|(b, _)| *b == bundle) {
            continue;
        }
        let value = truth.induced_value(bundle);
        if value.diff(hypothesis.induced_value(bundle)).unsigned_abs() > tolerance.cents() {
            out.push((bundle, value));
        }
    }
    out
}

/// Every bundle, ordered by decreasing hypothesis error (ties by bitmask).
pub fn bundles_by_error(truth: &XorBid, hypothesis: &XorBid) -> Vec<Bundle> {
    let mut all: Vec<Bundle> = Bundle::all(truth.goods()).collect();
    all.sort_by_key(|&b| std::cmp::Reverse(truth.induced_value(b).diff(hypothesis.induced_value(b)).unsigned_abs()));
    all
}

/// A quasilinear person whose answers come straight from a known XOR bid.
#[derive(Debug, Clone)]
pub struct ScriptedPerson {
    truth: XorBid,
    answers: HashMap<String, String>,
    default_answer: String,
    counts: QueryCounts,
}

impl ScriptedPerson {
    pub fn new(truth: XorBid) -> Self {
        ScriptedPerson {
            truth,
            answers: HashMap::new(),
            default_answer: "I don't have anything to add beyond what I've told you.".to_string(),
            counts: QueryCounts::default(),
        }
    }

    pub fn with_answer(mut self, question: impl Into<String>, answer: impl Into<String>) -> Self {
        self.answers.insert(question.into(), answer.into());
        self
    }

    pub fn with_default_answer(mut self, answer: impl Into<String>) -> Self {
        self.default_answer = answer.into();
        self
    }

    pub fn truth(&self) -> &XorBid {
        &self.truth
    }
}

impl PersonChannel for ScriptedPerson {
    fn goods(&self) -> usize {
        self.truth.goods()
    }

    fn answer_value(&mut self, bundle: Bundle) -> Result<Money, PersonError> {
        check_universe(bundle, self.goods())?;
        self.counts.value += 1;
        Ok(self.truth.induced_value(bundle))
    }

    fn answer_demand(&mut self, prices: &PriceFunction, offered: Bundle) -> Result<DemandResponse, PersonError> {
        check_universe(offered, self.goods())?;
        self.counts.demand += 1;
        Ok(respond_to_demand(&self.truth, prices, offered))
    }

    fn answer_natural(&mut self, question: &str) -> Result<String, PersonError> {
        self.counts.natural += 1;
        Ok(self.answers.get(question).unwrap_or(&self.default_answer).clone())
    }

    fn answer_equivalence(
        &mut self,
        hypothesis: &XorBid,
        tolerance: Money,
        _num_calls: u32,
    ) -> Result<Vec<(Bundle, Money)>, PersonError> {
        self.counts.equivalence += 1;
        let mut found = filter_counterexamples(&self.truth, hypothesis, tolerance, bundles_by_error(&self.truth, hypothesis));
        found.truncate(EQUIVALENCE_LIMIT);
        Ok(found)
    }

    fn counts(&self) -> QueryCounts {
        self.counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wdp::lindahl_prices;

    fn person() -> ScriptedPerson {
        let truth = XorBid::new(3)
            .insert_atomic(Bundle::singleton(0), Money::from_dollars(5))
            .insert_atomic(Bundle::from_indices([1, 2]), Money::from_dollars(50));
        ScriptedPerson::new(truth)
    }

    #[test]
    fn value_answers_use_free_disposal() {
        let mut p = person();
        assert_eq!(p.answer_value(Bundle::EMPTY).unwrap(), Money::ZERO);
        assert_eq!(p.answer_value(Bundle::singleton(0)).unwrap(), Money::from_dollars(5));
        assert_eq!(p.answer_value(Bundle::full(3)).unwrap(), Money::from_dollars(50));
        assert_eq!(p.counts().value, 3);
        assert!(p.answer_value(Bundle::singleton(5)).is_err());
    }

    #[test]
    fn demand_answers() {
        let mut p = person();
        let zero = PriceFunction::zero(3);
        let r = p.answer_demand(&zero, Bundle::EMPTY).unwrap();
        assert!(!r.satisfied);
        assert_eq!(r.bundle, Bundle::from_indices([1, 2]));
        let own = lindahl_prices(p.truth(), Money::ZERO);
        for b in Bundle::all(3) {
            assert!(p.answer_demand(&own, b).unwrap().satisfied);
        }
        assert_eq!(p.interactions(), 9);
    }

    #[test]
    fn equivalence_finds_missing_atom() {
        let mut p = person();
        let hypothesis = XorBid::new(3).insert_atomic(Bundle::singleton(0), Money::from_dollars(5));
        let found = p.answer_equivalence(&hypothesis, Money::from_dollars(1), 1).unwrap();
        assert!(found.contains(&(Bundle::from_indices([1, 2]), Money::from_dollars(50))));
        assert!(found.iter().all(|(b, v)| v.diff(hypothesis.induced_value(*b)).abs() > 100));
        let truth = p.truth().clone();
        assert!(p.answer_equivalence(&truth, Money::ZERO, 2).unwrap().is_empty());
        assert_eq!(p.counts().equivalence, 2);
    }

    #[test]
    fn natural_answers() {
        let mut p = person().with_answer("Budget?", "About $50.");
        assert_eq!(p.answer_natural("Budget?").unwrap(), "About $50.");
        assert!(!p.answer_natural("").unwrap().is_empty());
        assert_eq!(p.counts().natural, 2);
    }
}
