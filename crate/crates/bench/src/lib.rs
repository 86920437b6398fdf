//! Seeded instance generators shared by the benchmarks.

use proxylab_core::{Bundle, Money, XorBid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random bid of up to `atoms` non-empty bundles worth up to $1000.
pub fn random_bid(rng: &mut impl Rng, goods: usize, atoms: usize) -> XorBid {
    let full = Bundle::full(goods).bits();
    let atoms: Vec<_> = (0..atoms)
        .map(|_| (Bundle::from_bits(rng.gen_range(1..=full)), Money::from_cents(rng.gen_range(1..=100_000))))
        .collect();
    XorBid::from_atoms(goods, atoms)
}

/// `count` reproducible winner-determination instances.
pub fn wdp_instances(seed: u64, count: usize, goods: usize, bidders: usize, atoms: usize) -> Vec<Vec<XorBid>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..bidders).map(|_| random_bid(&mut rng, goods, atoms)).collect()).collect()
}
