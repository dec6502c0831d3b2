//! Exact dyadic rationals `m · 2^(-e)` and half-open dyadic intervals.
//!
//! Every width, endpoint and measure produced by the cutting-and-stacking
//! constructions is dyadic, so nothing in the crate ever rounds.

use alloc::string::{String, ToString};
use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, Mul, Neg, Sub};
use core::str::FromStr;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DyadicError {
    #[error("interval [{lower}, {upper}) is empty")]
    EmptyInterval { lower: Dyadic, upper: Dyadic },
    #[error("interval widths differ: {from} vs {to}")]
    WidthMismatch { from: Dyadic, to: Dyadic },
    #[error("point {point} lies outside [{lower}, {upper})")]
    PointOutside { point: Dyadic, lower: Dyadic, upper: Dyadic },
    #[error("cannot parse dyadic from {0:?}")]
    Parse(String),
}

/// An exact dyadic rational `mantissa · 2^(-exponent)`.
///
/// Kept canonical: either `exponent == 0` or the mantissa is odd, so
/// structural equality is numeric equality.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Dyadic {
    mantissa: BigInt,
    exponent: u64,
}

impl Dyadic {
    pub fn new(mantissa: BigInt, exponent: u64) -> Self {
        if mantissa.is_zero() {
            return Self::zero();
        }
        let tz = mantissa.trailing_zeros().unwrap_or(0).min(exponent);
        Dyadic { mantissa: mantissa >> tz, exponent: exponent - tz }
    }

    pub fn zero() -> Self {
        Dyadic { mantissa: BigInt::zero(), exponent: 0 }
    }

    pub fn one() -> Self {
        Dyadic { mantissa: BigInt::one(), exponent: 0 }
    }

    pub fn from_integer<T: Into<BigInt>>(value: T) -> Self {
        Dyadic { mantissa: value.into(), exponent: 0 }
    }

    /// `2^power` for any integer power.
    pub fn pow2(power: i64) -> Self {
        if power >= 0 {
            Dyadic { mantissa: BigInt::one() << power as u64, exponent: 0 }
        } else {
            Dyadic { mantissa: BigInt::one(), exponent: power.unsigned_abs() }
        }
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mantissa
    }

    pub fn exponent(&self) -> u64 {
        self.exponent
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.mantissa.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.mantissa.is_negative()
    }

    /// Multiplies by `2^shift`.
    pub fn mul_pow2(&self, shift: i64) -> Self {
        if shift >= 0 {
            let shift = shift as u64;
            if shift <= self.exponent {
                Dyadic { mantissa: self.mantissa.clone(), exponent: self.exponent - shift }.renormalized()
            } else {
                Dyadic::new(&self.mantissa << (shift - self.exponent), 0)
            }
        } else {
            Dyadic::new(self.mantissa.clone(), self.exponent + shift.unsigned_abs())
        }
    }

    pub fn half(&self) -> Self {
        self.mul_pow2(-1)
    }

    fn renormalized(self) -> Self {
        Dyadic::new(self.mantissa, self.exponent)
    }

    /// Multiplies by an integer.
    pub fn scale(&self, factor: &BigUint) -> Self {
        Dyadic::new(&self.mantissa * BigInt::from(factor.clone()), self.exponent)
    }

    pub fn abs(&self) -> Self {
        Dyadic { mantissa: self.mantissa.abs(), exponent: self.exponent }
    }

    pub fn floor(&self) -> BigInt {
        self.mantissa.div_floor(&(BigInt::one() << self.exponent))
    }

    /// Denominator `2^exponent` as an integer.
    pub fn denominator(&self) -> BigUint {
        BigUint::one() << self.exponent
    }

    pub fn to_ratio(&self) -> BigRational {
        BigRational::new(self.mantissa.clone(), BigInt::one() << self.exponent)
    }

    /// Returns the dyadic equal to `ratio`, if its reduced denominator is a power of two.
    pub fn from_ratio(ratio: &BigRational) -> Option<Self> {
        let denom = ratio.denom();
        if !denom.is_positive() {
            return None;
        }
        let tz = denom.trailing_zeros().unwrap_or(0);
        if (denom >> tz) != BigInt::one() {
            return None;
        }
        Some(Dyadic::new(ratio.numer().clone(), tz))
    }

    /// Nearest `f64`, for reporting only.
    pub fn to_f64(&self) -> f64 {
        let bits = self.mantissa.bits();
        // keep 64 significant bits, then scale
        let drop = bits.saturating_sub(64);
        let top = (&self.mantissa >> drop).to_f64().unwrap_or(0.0);
        let scale = drop as i64 - self.exponent as i64;
        top * libm::exp2(scale as f64)
    }
}

impl Default for Dyadic {
    fn default() -> Self {
        Dyadic::zero()
    }
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponent == 0 {
            write!(f, "{}", self.mantissa)
        } else if self.exponent <= 16 {
            write!(f, "{}/{}", self.mantissa, 1u64 << self.exponent)
        } else {
            write!(f, "{}/2^{}", self.mantissa, self.exponent)
        }
    }
}

/// Accepts `m`, `p/q` with `q` a power of two, `m/2^e` and `2^e` (e may be negative).
impl FromStr for Dyadic {
    type Err = DyadicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || DyadicError::Parse(s.to_string());
        let t = s.trim();
        if let Some(power) = t.strip_prefix("2^") {
            let power: i64 = power.trim_matches(|c| c == '(' || c == ')').parse().map_err(|_| err())?;
            return Ok(Dyadic::pow2(power));
        }
        match t.split_once('/') {
            None => t.parse::<BigInt>().map(Dyadic::from_integer).map_err(|_| err()),
            Some((num, den)) => {
                let num: BigInt = num.trim().parse().map_err(|_| err())?;
                let den = den.trim();
                if let Some(e) = den.strip_prefix("2^") {
                    let e: u64 = e.parse().map_err(|_| err())?;
                    return Ok(Dyadic::new(num, e));
                }
                let den: BigInt = den.parse().map_err(|_| err())?;
                if den.is_zero() {
                    return Err(err());
                }
                Dyadic::from_ratio(&BigRational::new(num, den)).ok_or_else(err)
            }
        }
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        if self.exponent == other.exponent {
            return self.mantissa.cmp(&other.mantissa);
        }
        let (a, b) = align(self, other);
        a.cmp(&b)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Mantissas of `a` and `b` over the common denominator `2^max(e_a, e_b)`.
fn align(a: &Dyadic, b: &Dyadic) -> (BigInt, BigInt) {
    match a.exponent.cmp(&b.exponent) {
        Ordering::Equal => (a.mantissa.clone(), b.mantissa.clone()),
        Ordering::Less => (&a.mantissa << (b.exponent - a.exponent), b.mantissa.clone()),
        Ordering::Greater => (a.mantissa.clone(), &b.mantissa << (a.exponent - b.exponent)),
    }
}

impl<'a> Add<&'a Dyadic> for &'a Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: &'a Dyadic) -> Dyadic {
        let (a, b) = align(self, rhs);
        Dyadic::new(a + b, self.exponent.max(rhs.exponent))
    }
}

impl<'a> Sub<&'a Dyadic> for &'a Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: &'a Dyadic) -> Dyadic {
        let (a, b) = align(self, rhs);
        Dyadic::new(a - b, self.exponent.max(rhs.exponent))
    }
}

impl<'a> Mul<&'a Dyadic> for &'a Dyadic {
    type Output = Dyadic;
    fn mul(self, rhs: &'a Dyadic) -> Dyadic {
        Dyadic::new(&self.mantissa * &rhs.mantissa, self.exponent + rhs.exponent)
    }
}

macro_rules! forward_owned {
    ($($trait:ident $method:ident),*) => {$(
        impl $trait<Dyadic> for Dyadic {
            type Output = Dyadic;
            fn $method(self, rhs: Dyadic) -> Dyadic { (&self).$method(&rhs) }
        }
        impl<'a> $trait<&'a Dyadic> for Dyadic {
            type Output = Dyadic;
            fn $method(self, rhs: &'a Dyadic) -> Dyadic { (&self).$method(rhs) }
        }
    )*};
}
forward_owned!(Add add, Sub sub, Mul mul);

impl Neg for Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        Dyadic { mantissa: -self.mantissa, exponent: self.exponent }
    }
}

impl core::iter::Sum for Dyadic {
    fn sum<I: Iterator<Item = Dyadic>>(iter: I) -> Dyadic {
        iter.fold(Dyadic::zero(), |acc, x| acc + x)
    }
}

/// A half-open interval `[lower, upper)` with dyadic endpoints.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct DyadicInterval {
    lower: Dyadic,
    upper: Dyadic,
}

impl DyadicInterval {
    pub fn new(lower: Dyadic, upper: Dyadic) -> Result<Self, DyadicError> {
        if lower >= upper {
            return Err(DyadicError::EmptyInterval { lower, upper });
        }
        Ok(DyadicInterval { lower, upper })
    }

    /// `[0, 1)`.
    pub fn unit() -> Self {
        DyadicInterval { lower: Dyadic::zero(), upper: Dyadic::one() }
    }

    pub fn lower(&self) -> &Dyadic {
        &self.lower
    }

    pub fn upper(&self) -> &Dyadic {
        &self.upper
    }

    pub fn width(&self) -> Dyadic {
        &self.upper - &self.lower
    }

    pub fn contains(&self, point: &Dyadic) -> bool {
        &self.lower <= point && point < &self.upper
    }

    pub fn contains_interval(&self, other: &DyadicInterval) -> bool {
        self.lower <= other.lower && other.upper <= self.upper
    }

    pub fn is_disjoint(&self, other: &DyadicInterval) -> bool {
        self.upper <= other.lower || other.upper <= self.lower
    }

    pub fn intersect(&self, other: &DyadicInterval) -> Option<DyadicInterval> {
        let lower = (&self.lower).max(&other.lower).clone();
        let upper = (&self.upper).min(&other.upper).clone();
        DyadicInterval::new(lower, upper).ok()
    }

    /// Left and right halves; the left half keeps the lower endpoint.
    pub fn split(&self) -> (DyadicInterval, DyadicInterval) {
        let mid = &self.lower + &self.width().half();
        (
            DyadicInterval { lower: self.lower.clone(), upper: mid.clone() },
            DyadicInterval { lower: mid, upper: self.upper.clone() },
        )
    }

    /// The `index`-th of `2^log2_pieces` equal consecutive pieces.
    pub fn piece(&self, index: &BigUint, log2_pieces: u64) -> DyadicInterval {
        let step = self.width().mul_pow2(-(log2_pieces as i64));
        let lower = &self.lower + &step.scale(index);
        let upper = &lower + &step;
        DyadicInterval { lower, upper }
    }

    /// Index of the piece of `2^log2_pieces` equal pieces containing `point`.
    pub fn piece_index(&self, point: &Dyadic, log2_pieces: u64) -> Option<BigUint> {
        if !self.contains(point) {
            return None;
        }
        // floor((point - lower) * 2^log2_pieces / width)
        let offset = (point - &self.lower).mul_pow2(log2_pieces as i64);
        let width = self.width();
        let (num, den) = align(&offset, &width);
        let q = num.div_floor(&den);
        match q.sign() {
            Sign::Minus => None,
            _ => q.to_biguint(),
        }
    }

    /// Whether the interval is a dyadic cell: width `2^-j` and lower endpoint a multiple of it.
    pub fn is_aligned_cell(&self) -> bool {
        let width = self.width();
        if width.mantissa() != &BigInt::one() {
            return false;
        }
        self.lower.exponent() <= width.exponent()
    }
}

impl fmt::Debug for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.lower, self.upper)
    }
}

impl fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Carries `point` from `from` to `to` preserving its offset from the lower endpoint.
pub fn translate(point: &Dyadic, from: &DyadicInterval, to: &DyadicInterval) -> Result<Dyadic, DyadicError> {
    let (wf, wt) = (from.width(), to.width());
    if wf != wt {
        return Err(DyadicError::WidthMismatch { from: wf, to: wt });
    }
    if !from.contains(point) {
        return Err(DyadicError::PointOutside {
            point: point.clone(),
            lower: from.lower.clone(),
            upper: from.upper.clone(),
        });
    }
    Ok(&to.lower + &(point - &from.lower))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> Dyadic {
        s.parse().unwrap()
    }

    fn iv(lo: &str, hi: &str) -> DyadicInterval {
        DyadicInterval::new(d(lo), d(hi)).unwrap()
    }

    #[test]
    fn canonical_form() {
        let x = Dyadic::new(BigInt::from(12), 4);
        assert_eq!(x.mantissa(), &BigInt::from(3));
        assert_eq!(x.exponent(), 2);
        assert_eq!(Dyadic::new(BigInt::from(0), 9), Dyadic::zero());
        assert_eq!(Dyadic::new(BigInt::from(8), 2), Dyadic::from_integer(2));
        assert_eq!(d("2/4"), d("1/2"));
    }

    #[test]
    fn parse_and_display() {
        assert_eq!(d("2^-3"), Dyadic::new(BigInt::from(1), 3));
        assert_eq!(d("3/2^5"), Dyadic::new(BigInt::from(3), 5));
        assert_eq!(d("1/256").to_string(), "1/256");
        assert_eq!(d("2^-40").to_string(), "1/2^40");
        assert!("1/3".parse::<Dyadic>().is_err());
        assert!("x".parse::<Dyadic>().is_err());
    }

    #[test]
    fn split_halves() {
        let (l, r) = DyadicInterval::unit().split();
        assert_eq!(l, iv("0", "1/2"));
        assert_eq!(r, iv("1/2", "1"));
        let (l, r) = iv("1/4", "1/2").split();
        assert_eq!(l, iv("1/4", "3/8"));
        assert_eq!(r, iv("3/8", "1/2"));
    }

    #[test]
    fn repeated_left_split_matches_piece_width() {
        let a1 = iv("1/4", "1/2");
        let (left, right) = a1.split();
        let (ll, lr) = left.split();
        // repeat-split oracle: each halving divides the width by two
        assert_eq!(ll.width(), d("1/16"));
        assert_eq!(lr.width(), d("1/16"));
        assert_eq!(right.width(), d("1/8"));
        assert_eq!(a1.piece(&BigUint::from(0u8), 2), ll);
        assert_eq!(a1.piece(&BigUint::from(1u8), 2), lr);
    }

    #[test]
    fn translate_examples() {
        let from = iv("1/4", "1/2");
        assert_eq!(translate(&d("1/4"), &from, &iv("3/4", "1")).unwrap(), d("3/4"));
        assert_eq!(translate(&d("5/16"), &from, &iv("1/2", "3/4")).unwrap(), d("9/16"));
        assert_eq!(translate(&d("5/16"), &from, &from).unwrap(), d("5/16"));
        assert!(matches!(translate(&d("5/16"), &from, &iv("0", "1/2")), Err(DyadicError::WidthMismatch { .. })));
        assert!(matches!(translate(&d("1/2"), &from, &iv("1/2", "3/4")), Err(DyadicError::PointOutside { .. })));
    }

    #[test]
    fn empty_interval_rejected() {
        assert!(DyadicInterval::new(d("1/2"), d("1/2")).is_err());
        assert!(DyadicInterval::new(d("1"), d("1/2")).is_err());
    }

    #[test]
    fn piece_index_locates() {
        let i = iv("1/2", "1");
        assert_eq!(i.piece_index(&d("5/8"), 2), Some(BigUint::from(1u8)));
        assert_eq!(i.piece_index(&d("1/2"), 3), Some(BigUint::from(0u8)));
        assert_eq!(i.piece_index(&d("1"), 3), None);
        assert!(i.is_aligned_cell());
        assert!(!iv("1/4", "3/4").is_aligned_cell());
    }

    #[test]
    fn to_f64_reports() {
        assert_eq!(d("3/8").to_f64(), 0.375);
        assert_eq!(d("-5").to_f64(), -5.0);
        assert_eq!(Dyadic::pow2(-1100).to_f64(), 0.0);
    }

    fn arb_dyadic() -> impl Strategy<Value = Dyadic> {
        (any::<i64>(), 0u64..200).prop_map(|(m, e)| Dyadic::new(BigInt::from(m), e))
    }

    proptest! {
        #[test]
        fn add_sub_round_trip(a in arb_dyadic(), b in arb_dyadic()) {
            prop_assert_eq!(&(&a + &b) - &b, a);
        }

        #[test]
        fn order_matches_rationals(a in arb_dyadic(), b in arb_dyadic()) {
            prop_assert_eq!(a.cmp(&b), a.to_ratio().cmp(&b.to_ratio()));
            prop_assert_eq!((&a * &b).to_ratio(), a.to_ratio() * b.to_ratio());
        }

        #[test]
        fn split_conserves_measure(m in 0i64..1_000_000, e in 0u64..60, w in 0u64..60) {
            let lo = Dyadic::new(BigInt::from(m), e);
            let hi = &lo + &Dyadic::pow2(-(w as i64));
            let i = DyadicInterval::new(lo, hi).unwrap();
            let (l, r) = i.split();
            prop_assert_eq!(&l.width() + &r.width(), i.width());
            prop_assert_eq!(l.width(), r.width());
            prop_assert!(l.lower() < r.lower());
        }

        #[test]
        fn translate_round_trip(m in 0i64..1024, off in 0i64..1024, shift in 0i64..4096) {
            let from = DyadicInterval::new(Dyadic::new(BigInt::from(m), 10), Dyadic::new(BigInt::from(m + 1024), 10)).unwrap();
            let to = DyadicInterval::new(Dyadic::new(BigInt::from(shift), 10), Dyadic::new(BigInt::from(shift + 1024), 10)).unwrap();
            let p = Dyadic::new(BigInt::from(m * 1024 + off), 20);
            let q = translate(&p, &from, &to).unwrap();
            prop_assert!(to.contains(&q));
            prop_assert_eq!(translate(&q, &to, &from).unwrap(), p);
        }
    }
}
