//! Random XOR bids and bidders that need no language model.

use rand::Rng;

use crate::bundle::Bundle;
use crate::money::Money;
use crate::scenario::Scenario;
use crate::sim::{Seed, SeedProvenance};
use crate::xor::XorBid;

use super::artifacts::BidderRecord;

/// Up to `max_atoms` random non-empty bundles, each worth `1..=max_value`
/// whole dollars, canonicalized under free disposal.
pub fn random_xor_bid<R: Rng + ?Sized>(rng: &mut R, goods: usize, max_atoms: usize, max_value_dollars: u64) -> XorBid {
    let count = rng.gen_range(1..=max_atoms.max(1));
    let full = Bundle::full(goods).bits();
    let atoms = (0..count).map(|_| {
        let bundle = Bundle::from_bits(rng.gen_range(1..=full));
        (bundle, Money::from_dollars(rng.gen_range(1..=max_value_dollars.max(1))))
    });
    XorBid::from_atoms(goods, atoms)
}

/// A plain-language seed stating the bid outright, so that natural-language
/// questions to a synthetic bidder still have something to answer from.
pub fn describe_bid(scenario: &Scenario, bid: &XorBid) -> String {
    let mut lines = vec!["This person is interested only in the following combinations of items:".to_string()];
    for atom in bid.atoms().iter().filter(|a| !a.bundle.is_empty()) {
        lines.push(format!("- {}: worth up to {}", scenario.bundle_label(atom.bundle), atom.value));
    }
    lines.push(
        "Any other bundle is worth as much as the most valuable combination above that it fully contains, \
         and nothing if it contains none of them."
            .to_string(),
    );
    lines.join("\n")
}

/// `tranches × tranche_size` random bidders.
pub fn synthetic_bidders<R: Rng + ?Sized>(
    rng: &mut R,
    scenario: &Scenario,
    tranches: usize,
    tranche_size: usize,
    max_atoms: usize,
    max_value_dollars: u64,
) -> Vec<BidderRecord> {
    let mut out = Vec::with_capacity(tranches * tranche_size);
    for tranche in 0..tranches {
        for index in 0..tranche_size {
            let bid = random_xor_bid(rng, scenario.num_goods(), max_atoms, max_value_dollars);
            let seed = Seed {
                text: describe_bid(scenario, &bid),
                stages: Vec::new(),
                provenance: SeedProvenance {
                    scenario: scenario.name.clone(),
                    tranche,
                    index,
                    rng_choice: 0,
                    backend: "synthetic".to_string(),
                },
            };
            out.push(BidderRecord::new(scenario, seed, &bid));
        }
    }
    out
}
