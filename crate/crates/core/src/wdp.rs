//! Winner determination for XOR bids and Lindahl price construction.
//!
//! [`solve_wdp`] is an exact depth-first branch and bound over per-bidder atom
//! choices. [`brute_force_wdp`] enumerates item-to-bidder assignments and is
//! kept as an independent oracle for small instances.
//!
//! Both solvers break ties identically: among welfare-maximizing allocations
//! they return the one whose vector of chosen atom indices (bidder 0 first) is
//! lexicographically smallest. Goods not needed by any winning atom stay
//! unallocated.

use thiserror::Error;

use crate::bundle::Bundle;
use crate::demand::PriceFunction;
use crate::money::Money;
use crate::xor::XorBid;

/// Largest universe [`brute_force_wdp`] accepts.
pub const ORACLE_MAX_GOODS: usize = 8;
/// Largest bidder count [`brute_force_wdp`] accepts.
pub const ORACLE_MAX_BIDDERS: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WdpError {
    #[error("winner determination needs at least one bid")]
    NoBidders,
    #[error("bid {index} is over {found} goods, expected {expected}")]
    UniverseMismatch { index: usize, expected: usize, found: usize },
    #[error("instance with {goods} goods and {bidders} bidders exceeds the enumeration limit")]
    TooLarge { goods: usize, bidders: usize },
}

/// One bundle per bidder; bundles are pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct Allocation {
    pub bundles: Vec<Bundle>,
}

impl Allocation {
    pub fn empty(bidders: usize) -> Self {
        Allocation { bundles: vec![Bundle::EMPTY; bidders] }
    }

    pub fn is_disjoint(&self) -> bool {
        let mut seen = Bundle::EMPTY;
        for b in &self.bundles {
            if !b.is_disjoint(seen) {
                return false;
            }
            seen = seen.union(*b);
        }
        true
    }

    /// Total value of this allocation under `bids`.
    pub fn welfare(&self, bids: &[XorBid]) -> Money {
        self.bundles.iter().zip(bids).map(|(b, bid)| bid.induced_value(*b)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct WdpSolution {
    pub allocation: Allocation,
    pub welfare: Money,
    pub per_bidder_value: Vec<Money>,
    /// Index into each bid's atom list of the winning atom.
    pub atom_choice: Vec<usize>,
}

impl WdpSolution {
    fn from_choice(bids: &[XorBid], atom_choice: Vec<usize>) -> Self {
        let bundles: Vec<Bundle> =
            atom_choice.iter().zip(bids).map(|(&j, bid)| bid.atoms()[j].bundle).collect();
        let per_bidder_value: Vec<Money> =
            atom_choice.iter().zip(bids).map(|(&j, bid)| bid.atoms()[j].value).collect();
        WdpSolution {
            allocation: Allocation { bundles },
            welfare: per_bidder_value.iter().copied().sum(),
            per_bidder_value,
            atom_choice,
        }
    }
}

fn check_bids(bids: &[XorBid]) -> Result<usize, WdpError> {
    let goods = bids.first().ok_or(WdpError::NoBidders)?.goods();
    for (index, bid) in bids.iter().enumerate() {
        if bid.goods() != goods {
            return Err(WdpError::UniverseMismatch { index, expected: goods, found: bid.goods() });
        }
    }
    Ok(goods)
}

struct Search<'a> {
    bids: &'a [XorBid],
    /// `remaining_bound[i]` = sum of max atom values of bidders `i..`.
    remaining_bound: Vec<u64>,
    choice: Vec<usize>,
    best_value: Option<u64>,
    best_choice: Vec<usize>,
}

impl Search<'_> {
    fn descend(&mut self, bidder: usize, used: Bundle, value: u64) {
        if bidder == self.bids.len() {
            if self.best_value.is_none_or(|best| value > best) {
                self.best_value = Some(value);
                self.best_choice.clone_from(&self.choice);
            }
            return;
        }
        // Atoms are tried in index order, so the first optimum found is the
        // lexicographically smallest; ties never need to be explored.
        if let Some(best) = self.best_value {
            if value + self.remaining_bound[bidder] <= best {
                return;
            }
        }
        for (j, atom) in self.bids[bidder].atoms().iter().enumerate() {
            if !atom.bundle.is_disjoint(used) {
                continue;
            }
            self.choice[bidder] = j;
            self.descend(bidder + 1, used.union(atom.bundle), value + atom.value.cents());
        }
    }
}

/// Exact welfare-maximizing allocation of at most one atom per bidder.
pub fn solve_wdp(bids: &[XorBid]) -> Result<WdpSolution, WdpError> {
    check_bids(bids)?;
    let mut remaining_bound = vec![0u64; bids.len() + 1];
    for i in (0..bids.len()).rev() {
        remaining_bound[i] = remaining_bound[i + 1] + bids[i].max_atom_value().cents();
    }
    let mut search = Search {
        bids,
        remaining_bound,
        choice: vec![0; bids.len()],
        best_value: None,
        best_choice: vec![0; bids.len()],
    };
    search.descend(0, Bundle::EMPTY, 0);
    Ok(WdpSolution::from_choice(bids, search.best_choice))
}

/// Exhaustive oracle: tries every assignment of each good to a bidder or to nobody.
pub fn brute_force_wdp(bids: &[XorBid]) -> Result<WdpSolution, WdpError> {
    let goods = check_bids(bids)?;
    let bidders = bids.len();
    if goods > ORACLE_MAX_GOODS || bidders > ORACLE_MAX_BIDDERS {
        return Err(WdpError::TooLarge { goods, bidders });
    }
    let base = bidders as u64 + 1;
    let total = base.pow(goods as u32);
    let mut best: Option<(u64, Vec<usize>)> = None;
    let mut sets = vec![Bundle::EMPTY; bidders];
    for code in 0..total {
        sets.iter_mut().for_each(|s| *s = Bundle::EMPTY);
        let mut rest = code;
        for good in 0..goods {
            let owner = (rest % base) as usize;
            rest /= base;
            if owner > 0 {
                sets[owner - 1] = sets[owner - 1].with(good);
            }
        }
        let choice: Vec<usize> = sets.iter().zip(bids).map(|(s, bid)| bid.best_atom_within(*s)).collect();
        let value: u64 = choice.iter().zip(bids).map(|(&j, bid)| bid.atoms()[j].value.cents()).sum();
        let better = match &best {
            None => true,
            Some((bv, bc)) => value > *bv || (value == *bv && choice < *bc),
        };
        if better {
            best = Some((value, choice));
        }
    }
    let (_, choice) = best.expect("at least one assignment");
    Ok(WdpSolution::from_choice(bids, choice))
}

/// Lindahl prices `φ(b) = v(b) - d`; `d = 0` gives the maximal price vector.
pub fn lindahl_prices(bid: &XorBid, offset: Money) -> PriceFunction {
    PriceFunction::new(bid.clone(), offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::demand_set;
    use crate::xor::tests::arb_bid;
    use proptest::prelude::*;

    fn b(goods: &[usize]) -> Bundle {
        Bundle::from_indices(goods.iter().copied())
    }

    fn usd(d: u64) -> Money {
        Money::from_dollars(d)
    }

    #[test]
    fn single_bidder() {
        let bids = vec![XorBid::from_atoms(3, [(b(&[0]), usd(5))])];
        let sol = solve_wdp(&bids).unwrap();
        assert_eq!(sol.allocation.bundles, vec![b(&[0])]);
        assert_eq!(sol.welfare, usd(5));
        assert_eq!(brute_force_wdp(&bids).unwrap(), sol);
    }

    #[test]
    fn higher_bidder_wins() {
        let bids = vec![
            XorBid::from_atoms(2, [(b(&[0]), usd(5))]),
            XorBid::from_atoms(2, [(b(&[0]), usd(7))]),
        ];
        let sol = solve_wdp(&bids).unwrap();
        assert_eq!(sol.allocation.bundles, vec![Bundle::EMPTY, b(&[0])]);
        assert_eq!(sol.welfare, usd(7));
        assert_eq!(brute_force_wdp(&bids).unwrap(), sol);
    }

    #[test]
    fn zero_bids_give_empty_allocation() {
        let bids = vec![XorBid::new(4); 3];
        let sol = brute_force_wdp(&bids).unwrap();
        assert_eq!(sol.welfare, Money::ZERO);
        assert_eq!(sol.allocation, Allocation::empty(3));
        assert_eq!(solve_wdp(&bids).unwrap(), sol);
    }

    #[test]
    fn errors() {
        assert_eq!(solve_wdp(&[]), Err(WdpError::NoBidders));
        assert!(matches!(
            solve_wdp(&[XorBid::new(3), XorBid::new(4)]),
            Err(WdpError::UniverseMismatch { index: 1, .. })
        ));
        assert!(matches!(brute_force_wdp(&[XorBid::new(9)]), Err(WdpError::TooLarge { .. })));
        assert!(matches!(brute_force_wdp(&vec![XorBid::new(3); 6]), Err(WdpError::TooLarge { .. })));
    }

    #[test]
    fn ties_prefer_lower_atom_index_in_bidder_order() {
        // Choices [0, 1] and [1, 0] tie at $5; [0, 1] is lexicographically smaller.
        let bids = vec![
            XorBid::from_atoms(1, [(b(&[0]), usd(5))]),
            XorBid::from_atoms(1, [(b(&[0]), usd(5))]),
        ];
        let sol = solve_wdp(&bids).unwrap();
        assert_eq!(sol.atom_choice, vec![0, 1]);
        assert_eq!(brute_force_wdp(&bids).unwrap(), sol);
    }

    #[test]
    fn lindahl_offsets() {
        let bid = XorBid::from_atoms(2, [(b(&[0]), usd(5))]);
        assert_eq!(lindahl_prices(&bid, usd(2)).price(b(&[0])), usd(3));
        let maximal = lindahl_prices(&bid, Money::ZERO);
        for bn in Bundle::all(2) {
            assert_eq!(maximal.price(bn), bid.induced_value(bn));
        }
    }

    fn arb_instance() -> impl Strategy<Value = Vec<XorBid>> {
        (1usize..=6).prop_flat_map(|n| prop::collection::vec(arb_bid(n, 8), 1..=4))
    }

    proptest! {
        #[test]
        fn branch_and_bound_matches_oracle(bids in arb_instance()) {
            let fast = solve_wdp(&bids).unwrap();
            let slow = brute_force_wdp(&bids).unwrap();
            prop_assert_eq!(&fast, &slow);
            prop_assert!(fast.allocation.is_disjoint());
            prop_assert_eq!(fast.allocation.welfare(&bids), fast.welfare);
        }

        #[test]
        fn adding_an_atom_never_lowers_welfare(bids in arb_instance(), who in 0usize..4, bits in any::<u16>(), cents in 0u64..100_000) {
            let who = who % bids.len();
            let before = solve_wdp(&bids).unwrap().welfare;
            let mut grown = bids.clone();
            let goods = grown[who].goods();
            let bundle = Bundle::from_bits(bits & Bundle::full(goods).bits());
            grown[who] = grown[who].clone().insert_atomic(bundle, Money::from_cents(cents));
            prop_assert!(solve_wdp(&grown).unwrap().welfare >= before);
        }

        #[test]
        fn allocation_is_supported_by_maximal_prices(bids in arb_instance()) {
            let sol = solve_wdp(&bids).unwrap();
            for (bid, won) in bids.iter().zip(&sol.allocation.bundles) {
                let prices = lindahl_prices(bid, Money::ZERO);
                prop_assert!(demand_set(bid, &prices).contains(won));
            }
        }

        #[test]
        fn scaling_preserves_argmax(bids in arb_instance(), factor in 1u64..20) {
            let sol = solve_wdp(&bids).unwrap();
            let scaled: Vec<XorBid> = bids.iter().map(|bid| bid.scaled(factor)).collect();
            let scaled_sol = solve_wdp(&scaled).unwrap();
            prop_assert_eq!(&scaled_sol.allocation, &sol.allocation);
            prop_assert_eq!(scaled_sol.welfare.cents(), sol.welfare.cents() * factor);
        }
    }
}
