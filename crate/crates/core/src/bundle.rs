//! Bundles of goods as fixed-width bitmasks.

use std::fmt;

/// Largest supported number of goods in one auction.
pub const MAX_GOODS: usize = 16;

/// A set of good indices over a universe of at most [`MAX_GOODS`] goods.
///
/// Bit `i` is set when good `i` is a member. The empty bundle is a valid value.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct Bundle(u16);

impl Bundle {
    pub const EMPTY: Bundle = Bundle(0);

    pub const fn from_bits(bits: u16) -> Self {
        Bundle(bits)
    }

    pub const fn bits(self) -> u16 {
        self.0
    }

    /// The bundle containing every good of an `n`-good universe.
    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_GOODS, "universe of {n} goods exceeds {MAX_GOODS}");
        if n == MAX_GOODS {
            Bundle(u16::MAX)
        } else {
            Bundle(((1u32 << n) - 1) as u16)
        }
    }

    pub fn singleton(good: usize) -> Self {
        assert!(good < MAX_GOODS, "good index {good} out of range");
        Bundle(1 << good)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(goods: I) -> Self {
        goods
            .into_iter()
            .fold(Bundle::EMPTY, |acc, g| acc.with(g))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, good: usize) -> bool {
        good < MAX_GOODS && self.0 & (1 << good) != 0
    }

    pub fn is_subset_of(self, other: Bundle) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint(self, other: Bundle) -> bool {
        self.0 & other.0 == 0
    }

    pub fn union(self, other: Bundle) -> Bundle {
        Bundle(self.0 | other.0)
    }

    pub fn with(self, good: usize) -> Bundle {
        self.union(Bundle::singleton(good))
    }

    pub fn without(self, good: usize) -> Bundle {
        Bundle(self.0 & !(1 << good))
    }

    /// True when every member lies inside an `n`-good universe.
    pub fn fits(self, n: usize) -> bool {
        self.is_subset_of(Bundle::full(n))
    }

    /// Member indices in ascending order.
    pub fn goods(self) -> impl Iterator<Item = usize> {
        (0..MAX_GOODS).filter(move |&g| self.contains(g))
    }

    /// Every bundle of an `n`-good universe in bitmask order.
    pub fn all(n: usize) -> impl Iterator<Item = Bundle> {
        let count = 1u32 << n;
        (0..count).map(|bits| Bundle(bits as u16))
    }

    /// Every bundle of an `n`-good universe ordered by cardinality, ties by bitmask.
    pub fn by_cardinality(n: usize) -> Vec<Bundle> {
        let mut all: Vec<Bundle> = Bundle::all(n).collect();
        all.sort_by_key(|b| (b.len(), b.0));
        all
    }

    /// Sort key used wherever a deterministic choice among bundles is needed.
    pub fn order_key(self) -> (usize, u16) {
        (self.len(), self.0)
    }
}

impl fmt::Debug for Bundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.goods()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_operations() {
        let a = Bundle::from_indices([0, 2]);
        let b = Bundle::from_indices([0, 1, 2]);
        assert!(a.is_subset_of(b));
        assert!(!b.is_subset_of(a));
        assert!(Bundle::EMPTY.is_subset_of(a));
        assert_eq!(b.without(1), a);
        assert_eq!(a.len(), 2);
        assert_eq!(a.goods().collect::<Vec<_>>(), vec![0, 2]);
        assert!(Bundle::singleton(3).is_disjoint(a));
    }

    #[test]
    fn full_and_enumeration() {
        assert_eq!(Bundle::full(0), Bundle::EMPTY);
        assert_eq!(Bundle::full(6).len(), 6);
        assert_eq!(Bundle::full(16).len(), 16);
        assert_eq!(Bundle::all(6).count(), 64);
        let ordered = Bundle::by_cardinality(3);
        assert_eq!(ordered[0], Bundle::EMPTY);
        assert_eq!(ordered[1], Bundle::singleton(0));
        assert_eq!(ordered[3], Bundle::singleton(2));
        assert_eq!(ordered[4], Bundle::from_indices([0, 1]));
        assert_eq!(*ordered.last().unwrap(), Bundle::full(3));
    }

    #[test]
    fn fits_universe() {
        assert!(Bundle::from_indices([0, 5]).fits(6));
        assert!(!Bundle::from_indices([6]).fits(6));
    }
}
