//! XOR bids and the valuations they induce.

use crate::bundle::{Bundle, MAX_GOODS};
use crate::money::Money;

use serde::{Deserialize, Serialize};

/// One atomic bundle of an XOR bid together with its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub bundle: Bundle,
    pub value: Money,
}

/// An XOR bid over an `n`-good universe.
///
/// Always contains the atom `(∅, 0)` at index 0 and is kept in canonical form:
/// every atom's value strictly exceeds the value the remaining atoms induce on
/// its bundle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawBid")]
pub struct XorBid {
    goods: usize,
    atoms: Vec<Atom>,
}

#[derive(Deserialize)]
struct RawBid {
    goods: usize,
    atoms: Vec<Atom>,
}

impl TryFrom<RawBid> for XorBid {
    type Error = String;

    fn try_from(raw: RawBid) -> Result<Self, Self::Error> {
        if raw.goods > MAX_GOODS {
            return Err(format!("universe of {} goods exceeds {MAX_GOODS}", raw.goods));
        }
        if let Some(a) = raw.atoms.iter().find(|a| !a.bundle.fits(raw.goods)) {
            return Err(format!("atom {:?} outside the {}-good universe", a.bundle, raw.goods));
        }
        Ok(XorBid::from_atoms(raw.goods, raw.atoms.into_iter().map(|a| (a.bundle, a.value))))
    }
}

impl XorBid {
    /// The empty hypothesis `{(∅, 0)}`.
    pub fn new(goods: usize) -> Self {
        assert!(goods <= MAX_GOODS, "universe of {goods} goods exceeds {MAX_GOODS}");
        XorBid { goods, atoms: vec![Atom { bundle: Bundle::EMPTY, value: Money::ZERO }] }
    }

    /// Build a canonical bid by inserting `atoms` in order.
    pub fn from_atoms<I: IntoIterator<Item = (Bundle, Money)>>(goods: usize, atoms: I) -> Self {
        atoms
            .into_iter()
            .fold(XorBid::new(goods), |bid, (b, v)| bid.insert_atomic(b, v))
    }

    /// Canonical bid representing a full (monotone) valuation table.
    ///
    /// Bundles are visited in ascending cardinality, so the atoms are exactly
    /// the bundles whose value exceeds that of every proper subset.
    pub fn from_valuation(valuation: &Valuation) -> Self {
        Bundle::by_cardinality(valuation.goods())
            .into_iter()
            .fold(XorBid::new(valuation.goods()), |bid, b| bid.insert_atomic(b, valuation.get(b)))
    }

    pub fn goods(&self) -> usize {
        self.goods
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Number of atoms including `(∅, 0)`.
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    /// True for the bid `{(∅, 0)}`.
    pub fn is_empty(&self) -> bool {
        self.atoms.len() == 1
    }

    pub fn has_atom(&self, bundle: Bundle) -> bool {
        self.atoms.iter().any(|a| a.bundle == bundle)
    }

    pub fn max_atom_value(&self) -> Money {
        self.atoms.iter().map(|a| a.value).max().unwrap_or(Money::ZERO)
    }

    /// Value of the highest-valued atom contained in `bundle`.
    pub fn induced_value(&self, bundle: Bundle) -> Money {
        self.atoms
            .iter()
            .filter(|a| a.bundle.is_subset_of(bundle))
            .map(|a| a.value)
            .max()
            .unwrap_or(Money::ZERO)
    }

    /// Index of the first atom attaining the induced value of `bundle`.
    pub fn best_atom_within(&self, bundle: Bundle) -> usize {
        let target = self.induced_value(bundle);
        self.atoms
            .iter()
            .position(|a| a.bundle.is_subset_of(bundle) && a.value == target)
            .expect("(∅, 0) is always contained")
    }

    /// Add `(bundle, value)` if it raises the induced value of `bundle`.
    ///
    /// Atoms made redundant by the new atom (supersets valued no higher) are
    /// dropped so the bid stays canonical. The empty bundle is pinned at 0.
    pub fn insert_atomic(mut self, bundle: Bundle, value: Money) -> Self {
        assert!(bundle.fits(self.goods), "bundle {bundle:?} outside {}-good universe", self.goods);
        if bundle.is_empty() || value <= self.induced_value(bundle) {
            return self;
        }
        self.atoms.retain(|a| !(bundle.is_subset_of(a.bundle) && a.value <= value));
        self.atoms.push(Atom { bundle, value });
        self
    }

    /// Same bid with every atom value multiplied by `factor`.
    pub fn scaled(&self, factor: u64) -> Self {
        XorBid {
            goods: self.goods,
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom { bundle: a.bundle, value: Money::from_cents(a.value.cents() * factor) })
                .collect(),
        }
    }

    /// The full induced valuation table.
    pub fn valuation(&self) -> Valuation {
        Valuation::from_fn(self.goods, |b| self.induced_value(b))
    }

    /// True when the canonical-form invariants hold.
    pub fn is_canonical(&self) -> bool {
        if self.atoms.first() != Some(&Atom { bundle: Bundle::EMPTY, value: Money::ZERO }) {
            return false;
        }
        self.atoms.iter().enumerate().skip(1).all(|(i, atom)| {
            let others = self
                .atoms
                .iter()
                .enumerate()
                .filter(|&(j, a)| j != i && a.bundle.is_subset_of(atom.bundle))
                .map(|(_, a)| a.value)
                .max()
                .unwrap_or(Money::ZERO);
            atom.value > others && atom.bundle.fits(self.goods)
        })
    }
}

/// A value for every bundle of an `n`-good universe, indexed by bitmask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Valuation {
    goods: usize,
    values: Vec<Money>,
}

impl Valuation {
    pub fn from_fn(goods: usize, mut f: impl FnMut(Bundle) -> Money) -> Self {
        let values = Bundle::all(goods).map(&mut f).collect();
        Valuation { goods, values }
    }

    pub fn constant(goods: usize, value: Money) -> Self {
        Valuation::from_fn(goods, |_| value)
    }

    pub fn goods(&self) -> usize {
        self.goods
    }

    pub fn get(&self, bundle: Bundle) -> Money {
        self.values[bundle.bits() as usize]
    }

    pub fn set(&mut self, bundle: Bundle, value: Money) {
        self.values[bundle.bits() as usize] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Bundle, Money)> + '_ {
        self.values.iter().enumerate().map(|(i, v)| (Bundle::from_bits(i as u16), *v))
    }
}

/// True iff `values` never decreases when a good is added to a bundle.
pub fn is_monotone(values: &Valuation) -> bool {
    values.iter().all(|(b, v)| {
        (0..values.goods())
            .filter(|&g| !b.contains(g))
            .all(|g| v <= values.get(b.with(g)))
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(goods: &[usize]) -> Bundle {
        Bundle::from_indices(goods.iter().copied())
    }

    fn usd(d: u64) -> Money {
        Money::from_dollars(d)
    }

    #[test]
    fn empty_bundle_is_zero() {
        let bid = XorBid::from_atoms(3, [(b(&[0]), usd(5))]);
        assert_eq!(bid.induced_value(Bundle::EMPTY), Money::ZERO);
    }

    #[test]
    fn insert_examples() {
        let start = XorBid::new(6);
        let one = start.clone().insert_atomic(b(&[0]), usd(5));
        assert_eq!(one.atoms().len(), 2);
        assert_eq!(one.atoms()[1], Atom { bundle: b(&[0]), value: usd(5) });

        let unchanged = one.clone().insert_atomic(b(&[0, 1]), usd(3));
        assert_eq!(unchanged, one);

        let three = one.clone().insert_atomic(b(&[0, 1]), usd(7));
        assert_eq!(three.atoms().len(), 3);
        assert_eq!(three.induced_value(b(&[0, 1])), usd(7));
        assert_eq!(three.induced_value(b(&[0])), usd(5));
        assert_eq!(three.induced_value(b(&[0, 1, 2])), usd(7));
    }

    #[test]
    fn insert_drops_dominated_supersets() {
        let bid = XorBid::from_atoms(3, [(b(&[0, 1]), usd(5)), (b(&[0]), usd(6))]);
        assert_eq!(bid.atoms().len(), 2);
        assert!(bid.is_canonical());
        assert_eq!(bid.induced_value(b(&[0, 1])), usd(6));
    }

    #[test]
    fn monotonicity_checks() {
        assert!(is_monotone(&Valuation::constant(3, usd(4))));
        let mut v = Valuation::constant(2, Money::ZERO);
        v.set(b(&[0]), usd(5));
        v.set(b(&[0, 1]), usd(4));
        assert!(!is_monotone(&v));
    }

    #[test]
    fn from_valuation_roundtrip() {
        let bid = XorBid::from_atoms(4, [(b(&[0, 1]), usd(8)), (b(&[2]), usd(3)), (b(&[1, 2, 3]), usd(9))]);
        let rebuilt = XorBid::from_valuation(&bid.valuation());
        assert_eq!(rebuilt.valuation(), bid.valuation());
        assert!(rebuilt.is_canonical());
    }

    pub(crate) fn arb_bid(goods: usize, max_atoms: usize) -> impl Strategy<Value = XorBid> {
        prop::collection::vec((0u16..(1 << goods), 0u64..100_000), 0..=max_atoms).prop_map(
            move |atoms| {
                XorBid::from_atoms(
                    goods,
                    atoms.into_iter().map(|(bits, c)| (Bundle::from_bits(bits), Money::from_cents(c))),
                )
            },
        )
    }

    proptest! {
        #[test]
        fn induced_valuation_is_monotone(bid in arb_bid(6, 8)) {
            prop_assert!(is_monotone(&bid.valuation()));
        }

        #[test]
        fn inserts_stay_canonical(bid in arb_bid(6, 10)) {
            prop_assert!(bid.is_canonical());
        }

        #[test]
        fn reinsertion_is_idempotent(bid in arb_bid(6, 8)) {
            let again = XorBid::from_atoms(6, bid.atoms().iter().map(|a| (a.bundle, a.value)));
            prop_assert_eq!(again.valuation(), bid.valuation());
        }
    }
}
