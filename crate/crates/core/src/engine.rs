//! The combinatorial-auction loop: collect bids, allocate, price, poll.
//!
//! Before the first allocation every proxy is asked once for its opening
//! bid with the empty bundle at zero prices. Each iteration then solves the
//! winner-determination problem over the current bids, prices every bidder
//! with maximal Lindahl prices of its own bid, and asks each proxy whether
//! its person is happy with the offered bundle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::Bundle;
use crate::demand::{demand_set, PriceFunction};
use crate::llm::LlmError;
use crate::money::Money;
use crate::person::{PersonError, QueryCounts};
use crate::wdp::{lindahl_prices, solve_wdp, Allocation, WdpError};
use crate::xor::XorBid;

/// Iteration cap used by the experiments.
pub const DEFAULT_MAX_ITERATIONS: usize = 16;

#[derive(Debug, Error)]
pub enum ProxyError {
    #[error(transparent)]
    Person(#[from] PersonError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// The message subroutine: given the offered bundle and prices, report
/// whether the person is satisfied and the proxy's current bid.
pub trait Proxy {
    fn goods(&self) -> usize;

    fn handle_message(&mut self, offered: Bundle, prices: &PriceFunction) -> Result<(bool, XorBid), ProxyError>;

    /// Per-kind interactions between the proxy and its person so far.
    fn counts(&self) -> QueryCounts;

    fn interactions(&self) -> u64 {
        self.counts().total()
    }
}

impl<P: Proxy + ?Sized> Proxy for Box<P> {
    fn goods(&self) -> usize {
        (**self).goods()
    }
    fn handle_message(&mut self, offered: Bundle, prices: &PriceFunction) -> Result<(bool, XorBid), ProxyError> {
        (**self).handle_message(offered, prices)
    }
    fn counts(&self) -> QueryCounts {
        (**self).counts()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// The bids the allocation was computed from.
    pub bids: Vec<XorBid>,
    pub allocation: Allocation,
    pub welfare: Money,
    pub prices_offsets: Vec<Money>,
    pub satisfied_flags: Vec<bool>,
    /// Bids returned by the proxies when polled this iteration.
    pub reported_bids: Vec<XorBid>,
    pub cumulative_interactions: Vec<u64>,
    pub query_counts: Vec<QueryCounts>,
}

impl IterationRecord {
    pub fn prices(&self, bidder: usize) -> PriceFunction {
        lindahl_prices(&self.bids[bidder], self.prices_offsets[bidder])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    /// Opening bids from the bootstrap poll.
    pub initial_bids: Vec<XorBid>,
    pub initial_interactions: Vec<u64>,
    pub records: Vec<IterationRecord>,
    pub terminated: Termination,
}

impl AuctionOutcome {
    pub fn converged(&self) -> bool {
        self.terminated == Termination::Converged
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn final_welfare(&self) -> Money {
        self.last().map_or(Money::ZERO, |r| r.welfare)
    }
}

/// The partial run attached to an aborted auction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialRun {
    pub iteration: usize,
    pub bidder: usize,
    pub records: Vec<IterationRecord>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("need at least one proxy and one iteration")]
    Empty,
    #[error(transparent)]
    Wdp(#[from] WdpError),
    #[error("proxy {} failed in iteration {}: {source}", .partial.bidder, .partial.iteration)]
    Proxy { partial: Box<PartialRun>, source: ProxyError },
    #[error("proxy {} made no progress twice in a row (iteration {})", .partial.bidder, .partial.iteration)]
    NoProgress { partial: Box<PartialRun> },
}

impl EngineError {
    pub fn partial(&self) -> Option<&PartialRun> {
        match self {
            EngineError::Proxy { partial, .. } | EngineError::NoProgress { partial } => Some(partial),
            _ => None,
        }
    }
}

/// Run the auction until every proxy reports its person satisfied, or for
/// `max_iterations` allocations.
pub fn run_ceca<P: Proxy>(proxies: &mut [P], max_iterations: usize) -> Result<AuctionOutcome, EngineError> {
    if proxies.is_empty() || max_iterations == 0 {
        return Err(EngineError::Empty);
    }
    let mut records: Vec<IterationRecord> = Vec::new();
    let fail = |records: &[IterationRecord], iteration, bidder, source| EngineError::Proxy {
        partial: Box::new(PartialRun { iteration, bidder, records: records.to_vec() }),
        source,
    };

    let mut bids = Vec::with_capacity(proxies.len());
    for (i, proxy) in proxies.iter_mut().enumerate() {
        let zero = PriceFunction::zero(proxy.goods());
        let (_, bid) = proxy.handle_message(Bundle::EMPTY, &zero).map_err(|e| fail(&records, 0, i, e))?;
        bids.push(bid);
    }
    let initial_bids = bids.clone();
    let initial_interactions = proxies.iter().map(Proxy::interactions).collect();
    let mut stalls = vec![0u32; proxies.len()];

    for iteration in 1..=max_iterations {
        let solution = solve_wdp(&bids)?;
        let offsets = vec![Money::ZERO; proxies.len()];
        let mut flags = Vec::with_capacity(proxies.len());
        let mut reported = Vec::with_capacity(proxies.len());
        for (i, proxy) in proxies.iter_mut().enumerate() {
            let prices = lindahl_prices(&bids[i], offsets[i]);
            let offered = solution.allocation.bundles[i];
            let (flag, bid) = proxy.handle_message(offered, &prices).map_err(|e| fail(&records, iteration, i, e))?;
            if !flag && bid == bids[i] {
                stalls[i] += 1;
            } else {
                stalls[i] = 0;
            }
            flags.push(flag);
            reported.push(bid);
        }
        let stalled = stalls.iter().position(|&s| s >= 2);
        records.push(IterationRecord {
            iteration,
            bids: std::mem::replace(&mut bids, reported.clone()),
            allocation: solution.allocation,
            welfare: solution.welfare,
            prices_offsets: offsets,
            satisfied_flags: flags,
            reported_bids: reported,
            cumulative_interactions: proxies.iter().map(Proxy::interactions).collect(),
            query_counts: proxies.iter().map(Proxy::counts).collect(),
        });
        if let Some(bidder) = stalled {
            return Err(EngineError::NoProgress { partial: Box::new(PartialRun { iteration, bidder, records }) });
        }
        if records.last().expect("just pushed").satisfied_flags.iter().all(|&f| f) {
            return Ok(AuctionOutcome { initial_bids, initial_interactions, records, terminated: Termination::Converged });
        }
    }
    Ok(AuctionOutcome { initial_bids, initial_interactions, records, terminated: Termination::IterationCap })
}

/// Whether the final allocation and prices form a competitive equilibrium
/// for the true valuations.
pub fn check_equilibrium(outcome: &AuctionOutcome, true_bids: &[XorBid]) -> bool {
    let Some(record) = outcome.last() else { return false };
    if record.allocation.bundles.len() != true_bids.len() || !record.allocation.is_disjoint() {
        return false;
    }
    true_bids.iter().enumerate().all(|(i, truth)| {
        let prices = record.prices(i);
        demand_set(truth, &prices).contains(&record.allocation.bundles[i])
    })
}
