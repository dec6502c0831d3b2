//! Estimators `f(x, k, y)`, the lift `f̂` to claims about `P(0^m)`, and
//! built-in estimators.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::dyadic::Dyadic;
use crate::label::count_in;
use crate::process::ProcessHandle;

/// Result of one budgeted evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Evaluation {
    Defined(BigRational),
    NotYet,
    BudgetExhausted,
}

/// A partial map `(x, k, y) ↦ ℚ` that is prefix-stable in `y`.
pub trait Estimator {
    fn tag(&self) -> String;

    fn evaluate(&mut self, x: &[u8], k: u64, y: &[u8], steps: u64) -> Evaluation;

    /// A lower bound on every value the estimator can return, if one is known.
    fn value_floor(&self) -> Option<BigRational> {
        None
    }

    /// `false` if the value never depends on `y`, so callers may pass `y = ε`.
    fn uses_input(&self) -> bool {
        true
    }
}

impl<E: Estimator + ?Sized> Estimator for Box<E> {
    fn tag(&self) -> String {
        (**self).tag()
    }

    fn evaluate(&mut self, x: &[u8], k: u64, y: &[u8], steps: u64) -> Evaluation {
        (**self).evaluate(x, k, y, steps)
    }

    fn value_floor(&self) -> Option<BigRational> {
        (**self).value_floor()
    }

    fn uses_input(&self) -> bool {
        (**self).uses_input()
    }
}

/// Evaluation budgets: largest precision `k`, largest run length `m`, and
/// steps per evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budgets {
    pub k: u64,
    pub m: u64,
    pub steps: u64,
}

impl Default for Budgets {
    fn default() -> Budgets {
        Budgets { k: 16, m: 4096, steps: 1_000_000 }
    }
}

/// A question to `f̂`: is `(n, m)` claimed from prefix `y`?
#[derive(Debug, Clone, Copy)]
pub struct FHatQuery<'a> {
    pub n: u64,
    pub m: u64,
    pub y: &'a [u8],
    pub budgets: Budgets,
}

/// `2^-(n+2)`
pub fn fhat_bound(n: u64) -> Dyadic {
    Dyadic::pow2(-(n as i64 + 2))
}

/// Smallest `k ≥ 1` for which `floor + 1/k < bound` is possible, or `None` if no `k` is.
pub fn first_useful_k(floor: Option<&BigRational>, bound: &BigRational) -> Option<u64> {
    let Some(floor) = floor else { return Some(1) };
    let gap = bound - floor;
    if gap <= BigRational::zero() {
        return None;
    }
    // 1/k < gap  ⇔  k > 1/gap
    let k = (gap.recip()).floor().to_integer() + BigInt::one();
    u64::try_from(k).ok().or(Some(u64::MAX))
}

/// `(n, m) ∈ f̂(y)`: some `k ≤ budgets.k` has `f(0^m, k, y) + 1/k < 2^-(n+2)`.
///
/// Values are prefix-stable, so a value defined at a prefix of `y` is also
/// the value at `y`; only `y` itself is evaluated. Exhausted budgets count
/// as "no".
pub fn fhat_member(f: &mut dyn Estimator, q: &FHatQuery<'_>) -> bool {
    if q.m == 0 || q.m > q.budgets.m || q.budgets.k == 0 {
        return false;
    }
    let zeros = alloc::vec![0u8; q.m as usize];
    fhat_member_with(f, q, &zeros)
}

pub(crate) fn fhat_member_with(f: &mut dyn Estimator, q: &FHatQuery<'_>, zeros: &[u8]) -> bool {
    let bound = fhat_bound(q.n).to_ratio();
    let Some(k0) = first_useful_k(f.value_floor().as_ref(), &bound) else {
        return false;
    };
    (k0..=q.budgets.k).any(|k| match f.evaluate(zeros, k, q.y, q.budgets.steps) {
        Evaluation::Defined(v) => v + BigRational::new(BigInt::one(), k.into()) < bound,
        _ => false,
    })
}

/// Always returns the same value.
#[derive(Debug, Clone)]
pub struct ConstantEstimator {
    value: BigRational,
}

impl ConstantEstimator {
    pub fn new(value: BigRational) -> ConstantEstimator {
        ConstantEstimator { value }
    }
}

impl Estimator for ConstantEstimator {
    fn tag(&self) -> String {
        format!("constant({})", self.value)
    }

    fn evaluate(&mut self, _: &[u8], _: u64, _: &[u8], _: u64) -> Evaluation {
        Evaluation::Defined(self.value.clone())
    }

    fn value_floor(&self) -> Option<BigRational> {
        Some(self.value.clone())
    }

    fn uses_input(&self) -> bool {
        false
    }
}

/// How long the empirical estimator waits: `G(k, |x|) = scale · k^k_power · L(|x|)`
/// with `L(l) = 2^l` or `L(l) = l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrowthRule {
    pub scale: u64,
    pub k_power: u32,
    pub exponential: bool,
}

impl Default for GrowthRule {
    fn default() -> GrowthRule {
        GrowthRule { scale: 1, k_power: 2, exponential: true }
    }
}

impl GrowthRule {
    /// `G(k, len)`, or `None` when it does not fit in `u64`.
    pub fn window(&self, k: u64, len: usize) -> Option<u64> {
        let kp = k.checked_pow(self.k_power)?;
        let l = if self.exponential {
            1u64.checked_shl(u32::try_from(len).ok()?).filter(|_| len < 64)?
        } else {
            len as u64
        };
        self.scale.checked_mul(kp)?.checked_mul(l)
    }

    pub fn describe(&self) -> String {
        let l = if self.exponential { "2^|x|" } else { "|x|" };
        format!("{}*k^{}*{}", self.scale, self.k_power, l)
    }
}

/// Frequency of `x` in the first `G(k, |x|)` symbols of `y`, frozen once available.
#[derive(Debug, Clone, Default)]
pub struct EmpiricalEstimator {
    rule: GrowthRule,
}

impl EmpiricalEstimator {
    pub fn new(rule: GrowthRule) -> EmpiricalEstimator {
        EmpiricalEstimator { rule }
    }

    pub fn rule(&self) -> GrowthRule {
        self.rule
    }
}

impl Estimator for EmpiricalEstimator {
    fn tag(&self) -> String {
        format!("empirical({})", self.rule.describe())
    }

    fn evaluate(&mut self, x: &[u8], k: u64, y: &[u8], steps: u64) -> Evaluation {
        let Some(g) = self.rule.window(k, x.len()) else {
            return Evaluation::NotYet;
        };
        let g = g.max(x.len() as u64).max(1);
        if g > y.len() as u64 {
            return Evaluation::NotYet;
        }
        if g > steps {
            return Evaluation::BudgetExhausted;
        }
        let window = &y[..g as usize];
        let slots = g - x.len() as u64 + 1;
        let hits = if x.is_empty() { slots } else { count_in(window, x) };
        Evaluation::Defined(BigRational::new(hits.into(), slots.into()))
    }

    fn value_floor(&self) -> Option<BigRational> {
        Some(BigRational::zero())
    }
}

/// Answers from the exact enclosure of a fixed process, ignoring `y`.
#[derive(Clone)]
pub struct OracleEstimator {
    process: ProcessHandle,
}

impl OracleEstimator {
    pub fn new(process: ProcessHandle) -> OracleEstimator {
        OracleEstimator { process }
    }
}

impl Estimator for OracleEstimator {
    fn tag(&self) -> String {
        format!("oracle({} stages)", self.process.top() + 1)
    }

    fn uses_input(&self) -> bool {
        false
    }

    fn evaluate(&mut self, x: &[u8], k: u64, _: &[u8], _: u64) -> Evaluation {
        if k == 0 {
            return Evaluation::NotYet;
        }
        let eps = BigRational::new(BigInt::one(), (2 * k).into());
        let Some(eps) = dyadic_below(&eps) else { return Evaluation::BudgetExhausted };
        match self.process.block_prob_limit(x, &eps) {
            Ok(enc) => Evaluation::Defined(enc.midpoint().to_ratio()),
            Err(_) => Evaluation::BudgetExhausted,
        }
    }

    fn value_floor(&self) -> Option<BigRational> {
        Some(BigRational::zero())
    }
}

/// The largest power of two not exceeding a positive rational.
fn dyadic_below(r: &BigRational) -> Option<Dyadic> {
    if r <= &BigRational::zero() {
        return None;
    }
    let mut e = 0i64;
    let mut p = Dyadic::one().to_ratio();
    while &p > r {
        p /= BigInt::from(2);
        e -= 1;
    }
    Some(Dyadic::pow2(e))
}

/// Checks prefix stability on the given extensions: every extension must agree
/// with a value defined at the base prefix. Returns the first offending extension.
pub fn prefix_stability_violation<'a>(
    f: &mut dyn Estimator,
    x: &[u8],
    k: u64,
    base: &[u8],
    extensions: impl IntoIterator<Item = &'a [u8]>,
    steps: u64,
) -> Option<Vec<u8>> {
    let Evaluation::Defined(v) = f.evaluate(x, k, base, steps) else {
        return None;
    };
    let mut y = base.to_vec();
    for ext in extensions {
        y.truncate(base.len());
        y.extend_from_slice(ext);
        if f.evaluate(x, k, &y, steps) != Evaluation::Defined(v.clone()) {
            return Some(y);
        }
    }
    None
}
