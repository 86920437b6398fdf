//! Bundle price functions and demand correspondences.

use crate::bundle::Bundle;
use crate::money::Money;
use crate::xor::XorBid;

/// Non-linear, bidder-specific bundle prices: `price(b) = max(base(b) - offset, 0)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriceFunction {
    pub base: XorBid,
    pub offset: Money,
}

impl PriceFunction {
    pub fn new(base: XorBid, offset: Money) -> Self {
        PriceFunction { base, offset }
    }

    /// Zero prices on every bundle.
    pub fn zero(goods: usize) -> Self {
        PriceFunction { base: XorBid::new(goods), offset: Money::ZERO }
    }

    pub fn goods(&self) -> usize {
        self.base.goods()
    }

    pub fn price(&self, bundle: Bundle) -> Money {
        self.base.induced_value(bundle).saturating_sub(self.offset)
    }
}

/// A person's answer to a demand query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DemandResponse {
    pub satisfied: bool,
    pub bundle: Bundle,
}

/// Quasi-linear utility of `bundle` in cents (may be negative).
pub fn utility(bid: &XorBid, prices: &PriceFunction, bundle: Bundle) -> i64 {
    bid.induced_value(bundle).diff(prices.price(bundle))
}

/// Highest attainable utility at `prices`.
pub fn max_utility(bid: &XorBid, prices: &PriceFunction) -> i64 {
    check_universe(bid, prices);
    Bundle::all(bid.goods())
        .map(|b| utility(bid, prices, b))
        .max()
        .expect("at least the empty bundle")
}

/// All utility-maximizing bundles, in bitmask order.
pub fn demand_set(bid: &XorBid, prices: &PriceFunction) -> Vec<Bundle> {
    let best = max_utility(bid, prices);
    Bundle::all(bid.goods())
        .filter(|&b| utility(bid, prices, b) == best)
        .collect()
}

/// The demanded bundle that is smallest in (cardinality, bitmask) order.
pub fn best_demanded(bid: &XorBid, prices: &PriceFunction) -> Bundle {
    demand_set(bid, prices)
        .into_iter()
        .min_by_key(|b| b.order_key())
        .expect("demand set is never empty")
}

/// Answer a demand query for `offered` truthfully from `bid`.
pub fn respond_to_demand(bid: &XorBid, prices: &PriceFunction, offered: Bundle) -> DemandResponse {
    if utility(bid, prices, offered) == max_utility(bid, prices) {
        DemandResponse { satisfied: true, bundle: offered }
    } else {
        DemandResponse { satisfied: false, bundle: best_demanded(bid, prices) }
    }
}

fn check_universe(bid: &XorBid, prices: &PriceFunction) {
    assert_eq!(
        bid.goods(),
        prices.goods(),
        "bid and prices are defined over different universes"
    );
}
