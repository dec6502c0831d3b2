//! The slow-rate process `C_n = C_{n-1}(k_n - k_{n-1}) ∗ A_n(k_n - (n+1))`:
//! construction, closed-form probabilities, the sets `B_n`, recovery of the
//! parameters from an orbit, the estimator built on that recovery, and
//! rate certificates.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::column::{Column, ColumnExpr};
use crate::dyadic::Dyadic;
use crate::label::PatternCounter;
use crate::process::{slab_a, slab_x1, ProcessError, ProcessHandle, ProcessKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SlowRateError {
    #[error("malformed k sequence: {0}")]
    Malformed(String),
    #[error("stage {stage} requested but the k sequence only reaches stage {known}")]
    BeyondKnown { stage: usize, known: usize },
    #[error("run length {m} is beyond the range decided by the known k values")]
    RunBeyondKnown { m: BigUint },
    #[error("inconsistent input at position {position}: {reason}")]
    Inconsistent { position: u64, reason: String },
    #[error("rate is not non-increasing: r({a}) < r({b})")]
    NotDecreasing { a: u64, b: u64 },
    #[error("rate must stay below 1; r({0}) >= 1")]
    RateNotBelowOne(u64),
    #[error("no k_{n} up to {limit} makes the rate fall below 2^-{}", n + 2)]
    RateTooSlow { n: usize, limit: u64 },
    #[error("unknown rate {0:?}; expected 0, 2^-n or 1/(n+c)")]
    UnknownRate(String),
    #[error(transparent)]
    Process(#[from] ProcessError),
}

/// `k_0 = 1 < k_1 < k_2 < …`, a finite prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KSequence(Vec<u64>);

impl KSequence {
    pub fn new(values: Vec<u64>) -> Result<KSequence, SlowRateError> {
        match values.first() {
            None => return Err(SlowRateError::Malformed("empty".into())),
            Some(&k0) if k0 != 1 => return Err(SlowRateError::Malformed(format!("k_0 = {k0}, expected 1"))),
            _ => {}
        }
        if let Some(w) = values.windows(2).position(|w| w[0] >= w[1]) {
            return Err(SlowRateError::Malformed(format!(
                "k_{} = {} does not exceed k_{} = {}",
                w + 1,
                values[w + 1],
                w,
                values[w]
            )));
        }
        if values.iter().any(|&k| k > 4096) {
            return Err(SlowRateError::Malformed("k values above 4096 are not supported".into()));
        }
        Ok(KSequence(values))
    }

    /// `k_i = 1 + i(i+1)/2`, so that `k_i - k_{i-1} = i`.
    pub fn gap_i(stages: usize) -> KSequence {
        KSequence((0..=stages as u64).map(|i| 1 + i * (i + 1) / 2).collect())
    }

    pub fn values(&self) -> &[u64] {
        &self.0
    }

    /// Index of the last known stage.
    pub fn top(&self) -> usize {
        self.0.len() - 1
    }

    pub fn get(&self, n: usize) -> Option<u64> {
        self.0.get(n).copied()
    }

    /// `k_i - k_{i-1} ≥ i` for every known `i`.
    pub fn gap_condition(&self) -> bool {
        self.0.windows(2).enumerate().all(|(i, w)| w[1] - w[0] > i as u64)
    }

    /// `f(n) = Σ_{i=1}^n 2^(k_i - i - 1)`, the zero-run length closing stage `n`.
    pub fn f(&self, n: usize) -> Result<BigUint, SlowRateError> {
        if n > self.top() {
            return Err(SlowRateError::BeyondKnown { stage: n, known: self.top() });
        }
        Ok((1..=n).map(|i| BigUint::one() << (self.0[i] - i as u64 - 1)).sum())
    }
}

/// Builds stages `0..=stages` of the slow-rate process.
pub fn build_theorem2(k: &KSequence, stages: usize) -> Result<ProcessHandle, SlowRateError> {
    if stages > k.top() {
        return Err(SlowRateError::BeyondKnown { stage: stages, known: k.top() });
    }
    let ks = &k.values()[..=stages];
    let mut columns = Vec::with_capacity(stages + 1);
    columns.push(Column::base(slab_x1()).expect("X1 is inside the unit interval"));
    for n in 1..=stages {
        let kn = ks[n];
        if kn < n as u64 + 1 {
            return Err(SlowRateError::Malformed(format!("k_{n} = {kn} < {}", n + 1)));
        }
        let prev = columns[n - 1].double(kn - ks[n - 1]);
        let a = Column::base(slab_a(n as u64)).expect("A_n is inside the unit interval").double(kn - n as u64 - 1);
        columns.push(Column::stack(&prev, &a).map_err(ProcessError::from)?);
    }
    Ok(ProcessHandle::new(ProcessKind::Theorem2, ks.to_vec(), columns)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    /// `0 1^m 0`
    OneRun,
    /// `1 0^m 1`
    ZeroRun,
}

/// Exact `P(01^m0)` or `P(10^m1)` for `m ≥ 1`.
///
/// `1 0^{f(n)} 1` starts on the level of `C_n` carrying its last `1`, but only
/// where `C_n` is followed by another copy of itself inside `C_{n+1}`, so
/// `P(10^{f(n)}1) = 2^-k_n - 2^-k_{n+1}` and needs `k_{n+1}`.
pub fn closed_form(k: &KSequence, kind: RunKind, m: &BigUint) -> Result<Dyadic, SlowRateError> {
    if m.is_zero() {
        return Err(SlowRateError::Malformed("run length must be at least 1".into()));
    }
    if k.top() < 1 {
        return Err(SlowRateError::BeyondKnown { stage: 1, known: k.top() });
    }
    match kind {
        RunKind::OneRun => {
            let k1 = k.values()[1];
            Ok(if m == &(BigUint::one() << (k1 - 1)) { Dyadic::pow2(-(k1 as i64)) } else { Dyadic::zero() })
        }
        RunKind::ZeroRun => {
            for n in 1..=k.top() {
                let fnv = k.f(n)?;
                if &fnv == m {
                    if n == k.top() {
                        return Err(SlowRateError::BeyondKnown { stage: n + 1, known: k.top() });
                    }
                    let v = k.values();
                    return Ok(Dyadic::pow2(-(v[n] as i64)) - Dyadic::pow2(-(v[n + 1] as i64)));
                }
                if &fnv > m {
                    return Ok(Dyadic::zero());
                }
            }
            Err(SlowRateError::RunBeyondKnown { m: m.clone() })
        }
    }
}

/// `w(C_n) = 2^-k_n`, the measure of the level where `1 0^{f(n)} 1` can start;
/// an upper bound on its probability.
pub fn zero_run_level_width(k: &KSequence, n: usize) -> Result<Dyadic, SlowRateError> {
    k.get(n).map(|kn| Dyadic::pow2(-(kn as i64))).ok_or(SlowRateError::BeyondKnown { stage: n, known: k.top() })
}

/// `λ(B_0 ∩ ⋯ ∩ B_n) = (1/2) Π_{i=1}^n (1 - 2^-(k_i - k_{i-1}))`.
pub fn b_intersection_measure(k: &KSequence, n: usize) -> Result<Dyadic, SlowRateError> {
    if n > k.top() {
        return Err(SlowRateError::BeyondKnown { stage: n, known: k.top() });
    }
    let v = k.values();
    Ok((1..=n).fold(Dyadic::pow2(-1), |acc, i| {
        let factor = Dyadic::one() - Dyadic::pow2(-((v[i] - v[i - 1]) as i64));
        &acc * &factor
    }))
}

/// Whether `xi` lies in `B_0 ∩ ⋯ ∩ B_n`, where `B_i` is the union of the first
/// `(2^(k_i - k_{i-1}) - 1) h(C_{i-1})` levels of `C_i`.
pub fn in_b_intersection(p: &ProcessHandle, xi: &Dyadic, n: usize) -> Result<bool, SlowRateError> {
    let k = p.k();
    for i in 0..=n {
        let Some((level, _)) = p.locate(xi, i)? else {
            return Ok(false);
        };
        if i > 0 {
            let copies = (BigUint::one() << (k[i] - k[i - 1])) - 1u32;
            if level > copies * p.height(i - 1)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// 1-based levels of `C_n` contained in `B_0 ∩ ⋯ ∩ B_n`; `C_n` must be materializable.
pub fn b_intersection_levels(p: &ProcessHandle, n: usize, limit: u64) -> Result<Vec<u64>, SlowRateError> {
    let levels = p.stage(n)?.levels(limit).map_err(ProcessError::from)?;
    let mut out = Vec::new();
    for (idx, iv) in levels.iter().enumerate() {
        if in_b_intersection(p, iv.lower(), n)? {
            out.push(idx as u64 + 1);
        }
    }
    Ok(out)
}

/// A zero run `10^a1` or one run `01^b0` seen in a scan; positions are 1-based
/// and point at the opening symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RunEvent {
    Zeros { len: u64, at: u64 },
    Ones { len: u64, at: u64 },
}

/// Incremental run scanner over a binary stream.
#[derive(Debug, Clone, Default)]
struct RunScanner {
    /// Symbols consumed so far.
    pos: u64,
    prev: Option<u8>,
    run: u64,
    /// Whether the current run has a different symbol before it.
    bounded: bool,
}

impl RunScanner {
    #[inline]
    fn push(&mut self, b: u8, mut emit: impl FnMut(RunEvent)) {
        self.pos += 1;
        match self.prev {
            Some(p) if p == b => {
                if b == 1 {
                    emit(RunEvent::Zeros { len: 0, at: self.pos - 1 });
                }
                self.run += 1;
            }
            Some(_) => {
                if self.bounded {
                    let at = self.pos - self.run - 1;
                    emit(if b == 1 {
                        RunEvent::Zeros { len: self.run, at }
                    } else {
                        RunEvent::Ones { len: self.run, at }
                    });
                }
                self.run = 1;
                self.bounded = true;
            }
            None => self.run = 1,
        }
        self.prev = Some(b);
    }
}

/// Why a scan fails `(∗)` or the stricter zero-probability pattern check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StarViolation {
    /// `10^{f(later)}1` first appears before `10^{f(earlier)}1` (or without it).
    OutOfOrder { earlier: usize, later: usize, later_at: u64, earlier_at: Option<u64> },
    /// `10^a1` with `a ∉ {0} ∪ {f(n)}`, `a ≤ f(N)`.
    SpuriousZeroRun { len: u64, at: u64 },
    /// `01^b0` with `b ≠ 2^(k_1 - 1)`.
    SpuriousOneRun { len: u64, at: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StarReport {
    /// 1-based position of the first `10^{f(n)}1`, for each known `n`.
    pub first_occurrences: Vec<Option<u64>>,
    pub violations: Vec<StarViolation>,
    /// Zero runs longer than `f(N)`: undecidable from the known prefix of `k`.
    pub beyond_known: Vec<(u64, u64)>,
    /// The zero-probability pattern checks go beyond `(∗)` as stated.
    pub strict_patterns: bool,
}

impl StarReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the first-occurrence order of `10^{f(n)}1` and rejects zero-probability runs.
pub fn star_check(bits: &[u8], k: &KSequence) -> StarReport {
    let top = k.top();
    let f: Vec<u64> = (0..=top).map(|n| k.f(n).ok().and_then(|v| v.to_u64()).unwrap_or(u64::MAX)).collect();
    let one_run = k.get(1).map(|k1| 1u64 << (k1 - 1).min(63));
    let mut first = alloc::vec![None; top + 1];
    let mut violations = Vec::new();
    let mut beyond = Vec::new();
    let mut scanner = RunScanner::default();
    for &b in bits {
        scanner.push(b, |ev| match ev {
            RunEvent::Zeros { len, at } => match f.binary_search(&len) {
                Ok(n) => {
                    if first[n].is_none() {
                        first[n] = Some(at);
                    }
                }
                Err(_) if len > f[top] => beyond.push((len, at)),
                Err(_) => violations.push(StarViolation::SpuriousZeroRun { len, at }),
            },
            RunEvent::Ones { len, at } => {
                if one_run.is_some_and(|b| b != len) {
                    violations.push(StarViolation::SpuriousOneRun { len, at });
                }
            }
        });
    }
    for later in 1..=top {
        if let Some(later_at) = first[later] {
            let earlier = later - 1;
            match first[earlier] {
                Some(e) if e < later_at => {}
                earlier_at => violations.push(StarViolation::OutOfOrder { earlier, later, later_at, earlier_at }),
            }
        }
    }
    StarReport { first_occurrences: first, violations, beyond_known: beyond, strict_patterns: true }
}

/// Recovered pairs `(n, k_n)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KTable(BTreeMap<usize, u64>);

impl KTable {
    pub fn get(&self, n: usize) -> Option<u64> {
        self.0.get(&n).copied()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.0.iter().map(|(&n, &k)| (n, k))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The longest run `k_0, k_1, …` known without gaps.
    pub fn prefix(&self) -> Vec<u64> {
        (0..).map_while(|n| self.get(n)).collect()
    }
}

/// Streaming recovery of `K = {(n, k_n)}` from an orbit.
///
/// `"11"` gives `k_0 = 1`, `01^b0` gives `k_1 = log2(b) + 1`, and a new
/// zero run `10^a1` with `a = f(n)` gives
/// `k_n = log2(f(n) - f(n-1)) + n + 1`.
#[derive(Debug, Clone, Default)]
pub struct KRecovery {
    scanner: RunScanner,
    table: KTable,
    /// Zero-run lengths `f(1), f(2), …` decoded so far.
    f: Vec<u64>,
    error: Option<SlowRateError>,
}

impl KRecovery {
    pub fn new() -> KRecovery {
        KRecovery::default()
    }

    pub fn table(&self) -> &KTable {
        &self.table
    }

    pub fn consumed(&self) -> u64 {
        self.scanner.pos
    }

    pub fn feed(&mut self, bits: &[u8]) -> Result<(), SlowRateError> {
        let KRecovery { scanner, table, f, error } = self;
        if let Some(e) = error {
            return Err(e.clone());
        }
        for &b in bits {
            scanner.push(b, |ev| {
                if error.is_none() {
                    if let Err(e) = apply_run(table, f, ev) {
                        *error = Some(e);
                    }
                }
            });
            if let Some(e) = error {
                return Err(e.clone());
            }
        }
        Ok(())
    }
}

fn apply_run(table: &mut KTable, f: &mut Vec<u64>, ev: RunEvent) -> Result<(), SlowRateError> {
    let inconsistent = |position: u64, reason: String| Err(SlowRateError::Inconsistent { position, reason });
    match ev {
        RunEvent::Zeros { len: 0, .. } => {
            table.0.entry(0).or_insert(1);
        }
        RunEvent::Zeros { len, at } => {
            let last = f.last().copied().unwrap_or(0);
            if len <= last {
                if f.binary_search(&len).is_err() {
                    return inconsistent(at, format!("zero run of length {len} is not one of {f:?}"));
                }
                return Ok(());
            }
            let diff = len - last;
            if !diff.is_power_of_two() {
                return inconsistent(at, format!("zero run increment {diff} is not a power of two"));
            }
            let n = f.len() + 1;
            let kn = diff.trailing_zeros() as u64 + n as u64 + 1;
            if let Some(prev) = table.get(n - 1) {
                if kn <= prev {
                    return inconsistent(at, format!("decoded k_{n} = {kn} does not exceed k_{} = {prev}", n - 1));
                }
            }
            if let Some(known) = table.get(n) {
                if known != kn {
                    return inconsistent(at, format!("decoded k_{n} = {kn} but k_{n} = {known} earlier"));
                }
            }
            f.push(len);
            table.0.insert(n, kn);
        }
        RunEvent::Ones { len, at } => {
            if !len.is_power_of_two() {
                return inconsistent(at, format!("one run of length {len} is not a power of two"));
            }
            let k1 = len.trailing_zeros() as u64 + 1;
            match table.get(1) {
                Some(known) if known != k1 => {
                    return inconsistent(at, format!("one run gives k_1 = {k1} but k_1 = {known} earlier"));
                }
                Some(_) => {}
                None if k1 < 2 => return inconsistent(at, format!("one run gives k_1 = {k1} < 2")),
                None => {
                    table.0.insert(1, k1);
                }
            }
        }
    }
    Ok(())
}

/// Runs the recovery over a whole string.
pub fn recover_k(bits: &[u8]) -> Result<KTable, SlowRateError> {
    let mut r = KRecovery::new();
    r.feed(bits)?;
    Ok(r.table().clone())
}

/// The estimate of `P(x)` to precision `1/k` once enough of `K` is known.
///
/// Uses the first stage whose enclosure, clipped to `[0, 1]`, is at most
/// `1/k` wide and returns its midpoint; the choice depends only on
/// `k_0, …, k_n`, so the value never changes on longer input.
pub fn g_from_table(x: &[u8], k: u64, table: &KTable) -> Result<Option<Dyadic>, SlowRateError> {
    let prefix = table.prefix();
    if prefix.is_empty() || k == 0 {
        return Ok(None);
    }
    let ks = KSequence::new(prefix)?;
    let p = build_theorem2(&ks, ks.top())?;
    g_from_process(x, k, &p, &mut p.counter())
}

/// [`g_from_table`] against a process already built from the recovered prefix.
pub fn g_from_process(
    x: &[u8],
    k: u64,
    p: &ProcessHandle,
    counter: &mut PatternCounter,
) -> Result<Option<Dyadic>, SlowRateError> {
    if k == 0 {
        return Ok(None);
    }
    let bound = BigRational::new(BigInt::one(), k.into());
    for n in 0..=p.top() {
        let full = p.stage_enclosure(counter, n, x)?;
        let hi = if full.hi > Dyadic::one() { Dyadic::one() } else { full.hi.clone() };
        if (&hi - &full.lo).to_ratio() <= bound {
            return Ok(Some((&full.lo + &hi).half()));
        }
    }
    Ok(None)
}

/// `g(x, k, bits)`: not yet defined (`None`) until the recovered prefix of `K` suffices.
pub fn g_estimate(x: &[u8], k: u64, bits: &[u8]) -> Result<Option<Dyadic>, SlowRateError> {
    g_from_table(x, k, &recover_k(bits)?)
}

/// A non-increasing rate function `r : ℕ → [0, 1)` with exact comparisons.
pub trait Rate {
    fn name(&self) -> String;
    /// Whether `r(at) < bound`, decided exactly.
    fn below(&self, at: &BigUint, bound: &Dyadic) -> bool;
    /// `r(at)` when it is representable.
    fn value(&self, at: u64) -> Option<BigRational>;
    /// Human-readable `r(at)`.
    fn describe(&self, at: &BigUint) -> String;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BuiltinRate {
    Zero,
    /// `2^-n`
    PowTwoNeg,
    /// `1/(n + c)`
    Reciprocal(u64),
}

impl core::str::FromStr for BuiltinRate {
    type Err = SlowRateError;

    fn from_str(s: &str) -> Result<BuiltinRate, SlowRateError> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if t == "0" {
            return Ok(BuiltinRate::Zero);
        }
        if t == "2^-n" || t == "2^(-n)" {
            return Ok(BuiltinRate::PowTwoNeg);
        }
        if let Some(inner) = t.strip_prefix("1/(n+").and_then(|r| r.strip_suffix(')')) {
            if let Ok(c) = inner.parse::<u64>() {
                if c >= 2 {
                    return Ok(BuiltinRate::Reciprocal(c));
                }
            }
        }
        Err(SlowRateError::UnknownRate(s.into()))
    }
}

impl Rate for BuiltinRate {
    fn name(&self) -> String {
        match self {
            BuiltinRate::Zero => "0".into(),
            BuiltinRate::PowTwoNeg => "2^-n".into(),
            BuiltinRate::Reciprocal(c) => format!("1/(n+{c})"),
        }
    }

    fn below(&self, at: &BigUint, bound: &Dyadic) -> bool {
        if !bound.is_positive() {
            return false;
        }
        match self {
            BuiltinRate::Zero => true,
            // bound = m / 2^e with m ≥ 1, so 2^-at < bound once at > e
            BuiltinRate::PowTwoNeg => match at.to_u64() {
                Some(a) if a <= bound.exponent() => Dyadic::pow2(-(a as i64)) < *bound,
                _ => true,
            },
            BuiltinRate::Reciprocal(c) => {
                // 1/(at + c) < bound  ⇔  (at + c) · bound > 1
                Dyadic::from_integer(BigInt::from(at + *c)) * bound.clone() > Dyadic::one()
            }
        }
    }

    fn value(&self, at: u64) -> Option<BigRational> {
        match self {
            BuiltinRate::Zero => Some(BigRational::zero()),
            BuiltinRate::PowTwoNeg => (at <= 4096).then(|| Dyadic::pow2(-(at as i64)).to_ratio()),
            BuiltinRate::Reciprocal(c) => Some(BigRational::new(1.into(), (at + c).into())),
        }
    }

    fn describe(&self, at: &BigUint) -> String {
        match self {
            BuiltinRate::Zero => "0".into(),
            BuiltinRate::PowTwoNeg => format!("2^-{at}"),
            BuiltinRate::Reciprocal(c) => format!("1/{}", at + *c),
        }
    }
}

/// `h' = 2^max(0, k_n - n - 2)`: the run of zeros certified at stage `n`.
pub fn h_prime(kn: u64, n: usize) -> BigUint {
    BigUint::one() << kn.saturating_sub(n as u64 + 2)
}

/// Checks `r` is non-increasing and below 1 on a spread of sample points.
pub fn check_rate(r: &dyn Rate) -> Result<(), SlowRateError> {
    let mut points: Vec<u64> = (1..=64).collect();
    points.extend((7..40).map(|j| 1u64 << j));
    let mut prev: Option<(u64, BigRational)> = None;
    for at in points {
        let Some(v) = r.value(at) else { continue };
        if v >= BigRational::one() {
            return Err(SlowRateError::RateNotBelowOne(at));
        }
        if let Some((a, pv)) = &prev {
            if &v > pv {
                return Err(SlowRateError::NotDecreasing { a: *a, b: at });
            }
        }
        prev = Some((at, v));
    }
    Ok(())
}

/// Greedy `k_n = max(k_{n-1} + n, min{t : r(h'(t)) < 2^-(n+2)})` for `n = 1..=stages`.
pub fn choose_k_for_rate(r: &dyn Rate, stages: usize) -> Result<KSequence, SlowRateError> {
    check_rate(r)?;
    let mut ks = alloc::vec![1u64];
    for n in 1..=stages {
        let floor = ks[n - 1] + n as u64;
        let bound = Dyadic::pow2(-(n as i64 + 2));
        let limit = floor + 4096;
        let t = (floor..=limit)
            .find(|&t| r.below(&h_prime(t, n), &bound))
            .ok_or(SlowRateError::RateTooSlow { n, limit })?;
        ks.push(t);
    }
    KSequence::new(ks)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub n: usize,
    pub h_prime: BigUint,
    /// `2^-(n+2) ≤ P(0^{h'})`.
    pub lower_bound: Dyadic,
    pub r_of_h_prime: String,
    pub pass: bool,
}

/// Certificate for stage `n`: the top part `A_n(k_n - n - 1)` of `C_n` is a
/// run of `2^(k_n - n - 1)` zeros, so every point in its lower half starts
/// with `0^{h'}`.
pub fn slowrate_certificate(p: &ProcessHandle, n: usize, r: Option<&dyn Rate>) -> Result<Certificate, SlowRateError> {
    let c = p.stage(n)?;
    let kn = p.k()[n];
    let hp = h_prime(kn, n);
    let lower_bound = Dyadic::pow2(-(n as i64 + 2));
    let structural = n == 0 || zero_top_certifies(c, n, &hp, &lower_bound);
    let pass_rate = r.is_none_or(|r| r.below(&hp, &lower_bound));
    Ok(Certificate {
        n,
        r_of_h_prime: r.map_or_else(|| "n/a".into(), |r| r.describe(&hp)),
        h_prime: hp,
        lower_bound,
        pass: structural && pass_rate,
    })
}

/// For `n = 0` the certificate is `P("0") = 1/2 ≥ 1/4`; the caller checks it separately.
fn zero_top_certifies(c: &Column, n: usize, hp: &BigUint, bound: &Dyadic) -> bool {
    let ColumnExpr::Stacked(parts) = c.expr() else { return false };
    let Some(top) = parts.last() else { return false };
    let (base, times) = match top.expr() {
        ColumnExpr::Doubled { column, times } => (column.clone(), *times),
        ColumnExpr::Base(_) => (top.clone(), 0),
        ColumnExpr::Stacked(_) => return false,
    };
    let ColumnExpr::Base(iv) = base.expr() else { return false };
    if iv != &slab_a(n as u64) || base.base_symbol() != Some(0) {
        return false;
    }
    let run = BigUint::one() << times;
    if hp > &run {
        return false;
    }
    // levels at which 0^{h'} starts inside the zero run
    let starts = run - hp + 1u32;
    &top.width().scale(&starts) >= bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::{parse_bits, render};
    use alloc::vec;

    fn ks(v: &[u64]) -> KSequence {
        KSequence::new(v.to_vec()).unwrap()
    }

    #[test]
    fn labels_of_small_sequences() {
        let p = build_theorem2(&ks(&[1, 2, 3]), 2).unwrap();
        let labels: Vec<_> = (0..3).map(|n| render(&p.label(n).unwrap().materialize(64).unwrap())).collect();
        assert_eq!(labels, ["1", "110", "1101100"]);
        let q = build_theorem2(&ks(&[1, 2, 4]), 2).unwrap();
        assert_eq!(render(&q.label(2).unwrap().materialize(64).unwrap()), "11011011011000");
    }

    #[test]
    fn malformed_sequences() {
        assert!(KSequence::new(vec![1, 1]).is_err());
        assert!(KSequence::new(vec![2, 3]).is_err());
        assert!(KSequence::new(vec![]).is_err());
        assert!(build_theorem2(&ks(&[1, 2]), 3).is_err());
    }

    #[test]
    fn closed_forms() {
        let k = ks(&[1, 2, 3]);
        assert_eq!(k.f(1).unwrap(), BigUint::from(1u32));
        assert_eq!(k.f(2).unwrap(), BigUint::from(2u32));
        let z = |m: u32| closed_form(&k, RunKind::ZeroRun, &BigUint::from(m));
        assert_eq!(z(1).unwrap(), Dyadic::pow2(-3));
        assert!(matches!(z(2), Err(SlowRateError::BeyondKnown { stage: 3, .. })));
        assert!(matches!(z(5), Err(SlowRateError::RunBeyondKnown { .. })));
        assert_eq!(zero_run_level_width(&k, 1).unwrap(), Dyadic::pow2(-2));
        let longer = ks(&[1, 2, 3, 6]);
        assert_eq!(closed_form(&longer, RunKind::ZeroRun, &BigUint::from(5u32)).unwrap(), Dyadic::zero());
        assert_eq!(closed_form(&k, RunKind::OneRun, &BigUint::from(2u32)).unwrap(), Dyadic::pow2(-2));
        assert_eq!(closed_form(&k, RunKind::OneRun, &BigUint::from(3u32)).unwrap(), Dyadic::zero());
    }

    #[test]
    fn zero_run_values_match_deep_stage_counts() {
        let k = ks(&[1, 2, 4, 7, 11]);
        let bits = build_theorem2(&k, 4).unwrap().label(4).unwrap().materialize(1 << 12).unwrap();
        for n in 1..=3 {
            let f = k.f(n).unwrap().to_usize().unwrap();
            let mut x = vec![1u8];
            x.resize(f + 1, 0);
            x.push(1);
            let count = crate::label::count_in(&bits, &x);
            let stage = Dyadic::pow2(-11).scale(&BigUint::from(count));
            assert_eq!(stage, closed_form(&k, RunKind::ZeroRun, &BigUint::from(f)).unwrap());
        }
    }

    #[test]
    fn b_sets_of_small_example() {
        let k = ks(&[1, 2, 4]);
        let p = build_theorem2(&k, 2).unwrap();
        assert_eq!(b_intersection_levels(&p, 2, 64).unwrap(), [1, 4, 7]);
        let b01: Vec<u64> = p
            .stage(2)
            .unwrap()
            .levels(64)
            .unwrap()
            .iter()
            .enumerate()
            .filter(|(_, iv)| in_b_intersection(&p, iv.lower(), 1).unwrap())
            .map(|(i, _)| i as u64 + 1)
            .collect();
        assert_eq!(b01, [1, 4, 7, 10]);
        assert_eq!(b_intersection_measure(&k, 0).unwrap(), Dyadic::pow2(-1));
        // three levels of width 1/16
        assert_eq!(b_intersection_measure(&k, 2).unwrap(), "3/16".parse().unwrap());
    }

    #[test]
    fn star_check_flags_order() {
        let k = ks(&[1, 2, 3]);
        let report = star_check(&parse_bits("10011").unwrap(), &k);
        assert!(!report.pass());
        assert!(report.violations.iter().any(|v| matches!(v, StarViolation::OutOfOrder { later: 2, later_at: 1, .. })));
        assert!(star_check(&parse_bits("11011001101100").unwrap(), &k).pass());
    }

    #[test]
    fn recovery_on_doubled_label() {
        let t = recover_k(&parse_bits("11011001101100").unwrap()).unwrap();
        assert_eq!(t.pairs().collect::<Vec<_>>(), [(0, 1), (1, 2), (2, 3)]);
        let before_seam = recover_k(&parse_bits("1101100").unwrap()).unwrap();
        assert_eq!(before_seam.prefix(), [1, 2]);
        assert!(recover_k(&[]).unwrap().is_empty());
        assert!(recover_k(&parse_bits("1011101").unwrap()).is_err());
    }

    #[test]
    fn g_with_coarse_precision() {
        let v = g_estimate(&parse_bits("0110").unwrap(), 1, &parse_bits("11").unwrap()).unwrap();
        assert!(v.is_some());
        assert_eq!(g_estimate(&[1], 1, &[]).unwrap(), None);
    }

    #[test]
    fn rate_parsing_and_greedy() {
        let zero: BuiltinRate = "0".parse().unwrap();
        assert_eq!(choose_k_for_rate(&zero, 4).unwrap().values(), [1, 2, 4, 7, 11]);
        let pow: BuiltinRate = "2^-n".parse().unwrap();
        let k = choose_k_for_rate(&pow, 5).unwrap();
        assert!(k.gap_condition());
        let recip: BuiltinRate = "1/(n+2)".parse().unwrap();
        let k2 = choose_k_for_rate(&recip, 5).unwrap();
        assert!(k2.values().iter().zip(k.values()).all(|(a, b)| a >= b));
        assert!("n^2".parse::<BuiltinRate>().is_err());
        assert_eq!(choose_k_for_rate(&pow, 10).unwrap().values()[..=5], k.values()[..]);
    }

    #[test]
    fn power_rate_compares_at_huge_arguments() {
        let pow = BuiltinRate::PowTwoNeg;
        let bound = Dyadic::pow2(-12);
        assert!(pow.below(&(BigUint::one() << 40u32), &bound));
        assert!(pow.below(&BigUint::from(13u32), &bound));
        assert!(!pow.below(&BigUint::from(12u32), &bound));
        assert!(pow.below(&BigUint::from(1u32), &Dyadic::new(3.into(), 2)));
    }

    #[test]
    fn certificates_of_small_example() {
        let p = build_theorem2(&ks(&[1, 2, 3]), 2).unwrap();
        let c = slowrate_certificate(&p, 2, None).unwrap();
        assert_eq!(c.h_prime, BigUint::one());
        assert_eq!(c.lower_bound, Dyadic::pow2(-4));
        assert!(c.pass);
    }
}
