//! Exact XOR-bid learning from demand and value queries.
//!
//! The hypothesis starts as `{(∅, 0)}`. Each unsatisfied demand query
//! reveals a bundle the person strictly prefers at hypothesis prices; items
//! are then stripped from it, in ascending index order, as long as the value
//! does not drop, which leaves exactly one new atom of the true bid.

use crate::bundle::Bundle;
use crate::demand::PriceFunction;
use crate::engine::{Proxy, ProxyError};
use crate::money::Money;
use crate::person::{PersonChannel, PersonError, QueryCounts};
use crate::wdp::lindahl_prices;
use crate::xor::XorBid;

/// Shrink `bundle` to a single-item-minimal sub-bundle of equal value.
pub fn learn_step<P: PersonChannel + ?Sized>(person: &mut P, bundle: Bundle) -> Result<(Bundle, Money), PersonError> {
    let value = person.answer_value(bundle)?;
    let mut current = bundle;
    for good in bundle.goods() {
        if person.answer_value(current.without(good))? == value {
            current = current.without(good);
        }
    }
    Ok((current, value))
}

/// One message round: demand-query the offered bundle and, if the person
/// prefers something else, learn one atom from it.
pub fn dnf_handle_message<P: PersonChannel + ?Sized>(
    person: &mut P,
    state: XorBid,
    offered: Bundle,
    prices: &PriceFunction,
) -> Result<(bool, XorBid), PersonError> {
    let response = person.answer_demand(prices, offered)?;
    if response.satisfied {
        return Ok((true, state));
    }
    let (atom, value) = learn_step(person, response.bundle)?;
    Ok((false, state.insert_atomic(atom, value)))
}

/// Learn the person's whole XOR bid, querying at the hypothesis' own prices.
pub fn learn_xor_full<P: PersonChannel + ?Sized>(person: &mut P) -> Result<XorBid, PersonError> {
    let mut hypothesis = XorBid::new(person.goods());
    loop {
        let prices = lindahl_prices(&hypothesis, Money::ZERO);
        let (satisfied, next) = dnf_handle_message(person, hypothesis, Bundle::EMPTY, &prices)?;
        if satisfied {
            return Ok(next);
        }
        hypothesis = next;
    }
}

/// The classical benchmark proxy.
#[derive(Debug, Clone)]
pub struct DnfProxy<P> {
    person: P,
    state: XorBid,
}

impl<P: PersonChannel> DnfProxy<P> {
    pub fn new(person: P) -> Self {
        let state = XorBid::new(person.goods());
        DnfProxy { person, state }
    }

    pub fn state(&self) -> &XorBid {
        &self.state
    }

    pub fn person(&self) -> &P {
        &self.person
    }
}

impl<P: PersonChannel> Proxy for DnfProxy<P> {
    fn goods(&self) -> usize {
        self.state.goods()
    }

    fn handle_message(&mut self, offered: Bundle, prices: &PriceFunction) -> Result<(bool, XorBid), ProxyError> {
        let state = std::mem::replace(&mut self.state, XorBid::new(0));
        match dnf_handle_message(&mut self.person, state.clone(), offered, prices) {
            Ok((flag, next)) => {
                self.state = next;
                Ok((flag, self.state.clone()))
            }
            Err(e) => {
                self.state = state;
                Err(e.into())
            }
        }
    }

    fn counts(&self) -> QueryCounts {
        self.person.counts()
    }
}
