//! Exact money arithmetic in integer cents, plus exact rational scale factors.

use std::fmt;
use std::iter::Sum;
use std::ops::Add;

use num_bigint::BigUint;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A non-negative amount of money in cents.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(u64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_cents(cents: u64) -> Self {
        Money(cents)
    }

    pub const fn from_dollars(dollars: u64) -> Self {
        Money(dollars * 100)
    }

    pub const fn cents(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: Money) -> Money {
        Money(self.0.saturating_sub(other.0))
    }

    /// Signed difference `self - other` in cents.
    pub fn diff(self, other: Money) -> i64 {
        self.0 as i64 - other.0 as i64
    }

    /// `self * ratio`, rounded half-up to the nearest cent.
    pub fn scale(self, ratio: Ratio) -> Money {
        let num = self.0 as u128 * ratio.num as u128;
        let den = ratio.den as u128;
        Money(((num + den / 2) / den) as u64)
    }

    /// `self * ratio^power` computed exactly, rounded half-up once at the end.
    pub fn scale_pow(self, ratio: Ratio, power: u32) -> Money {
        if power == 0 {
            return self;
        }
        let num = BigUint::from(self.0) * BigUint::from(ratio.num).pow(power);
        let den = BigUint::from(ratio.den).pow(power);
        let rounded: BigUint = (num + &den / 2u32) / den;
        Money(u64::try_from(rounded).expect("scaled value exceeds u64 cents"))
    }

    /// Parse a dollar amount such as `612`, `1,234.5` or `19.999`.
    ///
    /// Commas are ignored; digits past the cent are rounded half-up.
    pub fn parse_dollars(text: &str) -> Option<Money> {
        let cleaned: String = text.trim().chars().filter(|c| *c != ',').collect();
        let (whole, frac) = match cleaned.split_once('.') {
            Some((w, f)) => (w, f),
            None => (cleaned.as_str(), ""),
        };
        if whole.is_empty() && frac.is_empty() {
            return None;
        }
        if !whole.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit())
        {
            return None;
        }
        let dollars: u64 = if whole.is_empty() { 0 } else { whole.parse().ok()? };
        let mut digits = frac.bytes().map(|d| (d - b'0') as u64);
        let tenths = digits.next().unwrap_or(0);
        let hundredths = digits.next().unwrap_or(0);
        let round_up = digits.next().is_some_and(|d| d >= 5);
        let cents = dollars.checked_mul(100)?.checked_add(tenths * 10 + hundredths)?;
        Some(Money(cents + round_up as u64))
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl fmt::Debug for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// An exact non-negative rational factor, e.g. a discount or decay rate.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ratio {
    num: u64,
    den: u64,
}

impl Ratio {
    pub const ONE: Ratio = Ratio { num: 1, den: 1 };

    pub fn new(num: u64, den: u64) -> Self {
        assert!(den > 0, "ratio denominator must be positive");
        let g = gcd(num, den);
        Ratio { num: num / g, den: den / g }
    }

    /// Convert a decimal such as `0.75` exactly, to six decimal places.
    pub fn from_decimal(value: f64) -> Option<Self> {
        if !value.is_finite() || value < 0.0 {
            return None;
        }
        let scaled = (value * 1_000_000.0).round();
        if scaled > u64::MAX as f64 {
            return None;
        }
        Some(Ratio::new(scaled as u64, 1_000_000))
    }

    pub fn numer(self) -> u64 {
        self.num
    }

    pub fn denom(self) -> u64 {
        self.den
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

impl fmt::Debug for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = f64::deserialize(deserializer)?;
        Ratio::from_decimal(value)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid ratio {value}")))
    }
}
