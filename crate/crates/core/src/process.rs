//! Processes defined by extending column sequences: point location, orbit
//! emission, sampling, stage probabilities and limit enclosures.

use alloc::vec::Vec;
use core::ops::ControlFlow;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::column::{Column, ColumnError, ColumnExpr};
use crate::dyadic::{Dyadic, DyadicInterval};
use crate::label::{LabelError, LabelString, PatternCounter, DEFAULT_PATTERN_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcessKind {
    Theorem2,
    Adversary,
}

impl ProcessKind {
    pub fn name(self) -> &'static str {
        match self {
            ProcessKind::Theorem2 => "theorem2",
            ProcessKind::Adversary => "adversary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProcessError {
    #[error("stage {stage} requested but only stages 0..={built} are built")]
    StageOutOfRange { stage: usize, built: usize },
    #[error("point {0} is outside every built stage support")]
    OutsideSupport(Dyadic),
    #[error("point {0} is outside [0, 1)")]
    OutsideUnit(Dyadic),
    #[error("emitting {len} symbols needs more than the {built} built stages")]
    InsufficientStages { len: u64, built: usize },
    #[error("stage {stage} does not extend stage {previous}")]
    NotExtending { stage: usize, previous: usize },
    #[error("stage {stage} has width {width}, expected 2^-{k}")]
    WidthMismatch { stage: usize, width: Dyadic, k: u64 },
    #[error("stage list and k sequence differ in length ({stages} vs {ks})")]
    LengthMismatch { stages: usize, ks: usize },
    #[error("limit enclosures need a process whose supports exhaust [0, 1)")]
    RequiresFullSupport,
    #[error("no built stage reaches enclosure width {eps}; narrowest is {best}")]
    StageBudgetExhausted { eps: Dyadic, best: Dyadic },
    #[error("precision must be positive")]
    NonPositivePrecision,
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Column(#[from] ColumnError),
}

/// `X¹ = [1/2, 1)`.
pub fn slab_x1() -> DyadicInterval {
    DyadicInterval::new(Dyadic::pow2(-1), Dyadic::one()).expect("non-empty")
}

/// `A_n = [2^-(n+1), 2^-n)`.
pub fn slab_a(n: u64) -> DyadicInterval {
    let n = n as i64;
    DyadicInterval::new(Dyadic::pow2(-(n + 1)), Dyadic::pow2(-n)).expect("non-empty")
}

/// A two-sided enclosure `lo ≤ P(x) ≤ hi` computed from one stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enclosure {
    pub x: Vec<u8>,
    pub lo: Dyadic,
    pub hi: Dyadic,
    pub stage: usize,
}

impl Enclosure {
    pub fn width(&self) -> Dyadic {
        &self.hi - &self.lo
    }

    pub fn midpoint(&self) -> Dyadic {
        (&self.lo + &self.hi).half()
    }

    pub fn contains(&self, value: &Dyadic) -> bool {
        &self.lo <= value && value <= &self.hi
    }
}

/// A sampled one-sided orbit prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrbitSample {
    pub seed: u64,
    pub start: Dyadic,
    pub bits: Vec<u8>,
    pub stage_used: usize,
    /// Total-variation distance to the unconditioned process on the emitted
    /// coordinates, when known.
    pub tv_bound: Option<Dyadic>,
}

/// Where an emission starts: stage and 1-based level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub stage: usize,
    pub level: BigUint,
}

/// An executable process built from stages `C_0, …, C_N`.
#[derive(Clone)]
pub struct ProcessHandle {
    kind: ProcessKind,
    k: Vec<u64>,
    stages: Vec<Column>,
    labels: Vec<LabelString>,
    supports: Vec<Vec<DyadicInterval>>,
    pattern_cap: usize,
}

impl ProcessHandle {
    /// Checks that the stages extend one another and that `w(C_n) = 2^-k_n`.
    ///
    /// Stage `n + 1` must be `C_n(d)` or start with `C_n(d)` as its first part.
    pub fn new(kind: ProcessKind, k: Vec<u64>, stages: Vec<Column>) -> Result<ProcessHandle, ProcessError> {
        if k.len() != stages.len() || stages.is_empty() {
            return Err(ProcessError::LengthMismatch { stages: stages.len(), ks: k.len() });
        }
        for (n, (c, &kn)) in stages.iter().zip(&k).enumerate() {
            if c.width() != &Dyadic::pow2(-(kn as i64)) {
                return Err(ProcessError::WidthMismatch { stage: n, width: c.width().clone(), k: kn });
            }
            if n > 0 && !extends(&stages[n - 1], c) {
                return Err(ProcessError::NotExtending { stage: n, previous: n - 1 });
            }
        }
        let labels = stages.iter().map(LabelString::of_column).collect::<Result<Vec<_>, _>>()?;
        let supports = stages.iter().map(Column::support_intervals).collect();
        Ok(ProcessHandle { kind, k, stages, labels, supports, pattern_cap: DEFAULT_PATTERN_CAP })
    }

    pub fn with_pattern_cap(mut self, cap: usize) -> ProcessHandle {
        self.pattern_cap = cap;
        self
    }

    pub fn pattern_cap(&self) -> usize {
        self.pattern_cap
    }

    pub fn kind(&self) -> ProcessKind {
        self.kind
    }

    pub fn k(&self) -> &[u64] {
        &self.k
    }

    /// Index of the last built stage.
    pub fn top(&self) -> usize {
        self.stages.len() - 1
    }

    pub fn stage(&self, n: usize) -> Result<&Column, ProcessError> {
        self.stages.get(n).ok_or(ProcessError::StageOutOfRange { stage: n, built: self.top() })
    }

    pub fn stages(&self) -> &[Column] {
        &self.stages
    }

    pub fn label(&self, n: usize) -> Result<&LabelString, ProcessError> {
        self.labels.get(n).ok_or(ProcessError::StageOutOfRange { stage: n, built: self.top() })
    }

    pub fn width(&self, n: usize) -> Result<&Dyadic, ProcessError> {
        Ok(self.stage(n)?.width())
    }

    pub fn height(&self, n: usize) -> Result<&BigUint, ProcessError> {
        Ok(self.stage(n)?.height())
    }

    pub fn support_measure(&self, n: usize) -> Result<&Dyadic, ProcessError> {
        Ok(self.stage(n)?.support_measure())
    }

    /// 1-based level of `C_n` containing `xi`, or `None` off its support.
    pub fn locate(&self, xi: &Dyadic, n: usize) -> Result<Option<(BigUint, DyadicInterval)>, ProcessError> {
        check_unit(xi)?;
        Ok(self.stage(n)?.locate(xi).map(|(level, iv)| (level + 1u32, iv)))
    }

    /// `T(xi)` as defined by stage `n`.
    pub fn transform(&self, xi: &Dyadic, n: usize) -> Result<Option<Dyadic>, ProcessError> {
        Ok(self.stage(n)?.transform(xi))
    }

    /// The stage and level from which `len` symbols of the orbit of `xi` can be read.
    pub fn place(&self, xi: &Dyadic, len: u64) -> Result<Placement, ProcessError> {
        check_unit(xi)?;
        let mut seen = false;
        for (n, c) in self.stages.iter().enumerate() {
            let Some((level, _)) = c.locate(xi) else {
                continue;
            };
            seen = true;
            let level = level + 1u32;
            if &level + len <= c.height() + 1u32 {
                return Ok(Placement { stage: n, level });
            }
        }
        if seen {
            Err(ProcessError::InsufficientStages { len, built: self.top() })
        } else {
            Err(ProcessError::OutsideSupport(xi.clone()))
        }
    }

    /// First `len` symbols of the one-sided orbit of `xi`.
    pub fn emit_symbols(&self, xi: &Dyadic, len: u64) -> Result<Vec<u8>, ProcessError> {
        let mut out = Vec::new();
        self.emit_with(xi, len, 1 << 16, |chunk| {
            out.extend_from_slice(chunk);
            ControlFlow::Continue(())
        })?;
        Ok(out)
    }

    /// Streams the first `len` orbit symbols of `xi` in chunks; `sink` may stop early.
    pub fn emit_with(
        &self,
        xi: &Dyadic,
        len: u64,
        chunk: usize,
        mut sink: impl FnMut(&[u8]) -> ControlFlow<()>,
    ) -> Result<Placement, ProcessError> {
        let placement = if len == 0 { Placement { stage: 0, level: BigUint::one() } } else { self.place(xi, len)? };
        let label = &self.labels[placement.stage];
        let mut start = &placement.level - 1u32;
        let mut remaining = len;
        let mut buf = Vec::with_capacity(chunk.min(len as usize));
        while remaining > 0 {
            let take = remaining.min(chunk.max(1) as u64) as usize;
            buf.clear();
            label.extract_zero_based(&start, take, &mut buf)?;
            if sink(&buf).is_break() {
                break;
            }
            start += take;
            remaining -= take as u64;
        }
        Ok(placement)
    }

    /// A point drawn uniformly from `S(C_m)`.
    ///
    /// Every level of every built stage is a union of aligned dyadic cells of
    /// width `2^-k_N`, so `k_N` random bits decide all locations exactly.
    pub fn sample_point(&self, m: usize, rng: &mut impl RngCore) -> Result<Dyadic, ProcessError> {
        let support = self.supports.get(m).ok_or(ProcessError::StageOutOfRange { stage: m, built: self.top() })?;
        let bits = *self.k.last().expect("non-empty");
        let mut bytes = alloc::vec![0u8; bits.div_ceil(8) as usize];
        loop {
            rng.fill_bytes(&mut bytes);
            let extra = bytes.len() as u64 * 8 - bits;
            if extra > 0 {
                let last = bytes.len() - 1;
                bytes[last] &= 0xff >> extra;
            }
            let xi = Dyadic::new(BigUint::from_bytes_le(&bytes).into(), bits);
            if support.iter().any(|iv| iv.contains(&xi)) {
                return Ok(xi);
            }
        }
    }

    /// Start point for `seed`, uniform on `S(C_m)`.
    pub fn sample_start(&self, seed: u64, m: usize) -> Result<Dyadic, ProcessError> {
        self.sample_point(m, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Orbit of a point uniform on the top stage support.
    pub fn sample_orbit(&self, seed: u64, len: u64) -> Result<OrbitSample, ProcessError> {
        self.sample_orbit_from(seed, len, self.top())
    }

    /// Orbit of a point uniform on `S(C_m)`; deeper stages give emission headroom.
    pub fn sample_orbit_from(&self, seed: u64, len: u64, m: usize) -> Result<OrbitSample, ProcessError> {
        let start = self.sample_start(seed, m)?;
        let mut bits = Vec::new();
        let placement = self.emit_with(&start, len, 1 << 16, |c| {
            bits.extend_from_slice(c);
            ControlFlow::Continue(())
        })?;
        Ok(OrbitSample { seed, start, bits, stage_used: placement.stage, tv_bound: self.sampling_tv_bound(m) })
    }

    /// `1 - λ(S(C_m))`: conditioning on that support moves probabilities by at most this.
    pub fn sampling_tv_bound(&self, m: usize) -> Option<Dyadic> {
        match self.kind {
            ProcessKind::Theorem2 => self.stages.get(m).map(|c| Dyadic::one() - c.support_measure().clone()),
            ProcessKind::Adversary => None,
        }
    }

    pub fn counter(&self) -> PatternCounter {
        PatternCounter::new(self.pattern_cap)
    }

    /// Number of occurrences of `x` in `s(C_n)`; `0` when `x` is longer than the label.
    pub fn occurrences(&self, counter: &mut PatternCounter, n: usize, x: &[u8]) -> Result<BigUint, ProcessError> {
        let label = self.label(n)?;
        if x.is_empty() {
            return Ok(label.len().clone());
        }
        match counter.count(label, x) {
            Ok(c) => Ok(c),
            Err(LabelError::PatternLongerThanString { .. }) => Ok(BigUint::zero()),
            Err(e) => Err(e.into()),
        }
    }

    /// `P_n(x)`: the measure of the levels of `C_n` at which an occurrence of `x` starts.
    pub fn block_prob(&self, n: usize, x: &[u8]) -> Result<Dyadic, ProcessError> {
        self.block_prob_with(&mut self.counter(), n, x)
    }

    pub fn block_prob_with(&self, counter: &mut PatternCounter, n: usize, x: &[u8]) -> Result<Dyadic, ProcessError> {
        if x.len() > counter.cap() {
            return Err(LabelError::PatternTooLong { len: x.len(), cap: counter.cap() }.into());
        }
        let count = self.occurrences(counter, n, x)?;
        Ok(self.stages[n].width().scale(&count))
    }

    /// `[P_n(x), P_n(x) + (1 - λ(S(C_n))) + (|x| - 1) w(C_n)]`.
    pub fn stage_enclosure(&self, counter: &mut PatternCounter, n: usize, x: &[u8]) -> Result<Enclosure, ProcessError> {
        let lo = self.block_prob_with(counter, n, x)?;
        let c = &self.stages[n];
        let outside = Dyadic::one() - c.support_measure().clone();
        let straddle = c.width().scale(&BigUint::from(x.len().saturating_sub(1)));
        let hi = &(&lo + &outside) + &straddle;
        Ok(Enclosure { x: x.to_vec(), lo, hi, stage: n })
    }

    /// The first stage enclosure of width at most `eps`.
    pub fn block_prob_limit(&self, x: &[u8], eps: &Dyadic) -> Result<Enclosure, ProcessError> {
        self.block_prob_limit_with(&mut self.counter(), x, eps)
    }

    pub fn block_prob_limit_with(
        &self,
        counter: &mut PatternCounter,
        x: &[u8],
        eps: &Dyadic,
    ) -> Result<Enclosure, ProcessError> {
        if self.kind != ProcessKind::Theorem2 {
            return Err(ProcessError::RequiresFullSupport);
        }
        if !eps.is_positive() {
            return Err(ProcessError::NonPositivePrecision);
        }
        let mut best = None;
        for n in 0..self.stages.len() {
            let width = self.enclosure_width(n, x.len());
            if &width <= eps {
                return self.stage_enclosure(counter, n, x);
            }
            best = Some(width);
        }
        Err(ProcessError::StageBudgetExhausted { eps: eps.clone(), best: best.expect("non-empty") })
    }

    /// Width of the stage-`n` enclosure for patterns of length `len`.
    pub fn enclosure_width(&self, n: usize, len: usize) -> Dyadic {
        let c = &self.stages[n];
        &(Dyadic::one() - c.support_measure().clone()) + &c.width().scale(&BigUint::from(len.saturating_sub(1)))
    }

    /// `k_n / h(C_n)` per stage; bounds `-log2 P(s(C_n)) / h(C_n)` from above.
    pub fn entropy_profile(&self) -> Vec<BigRational> {
        self.stages.iter().zip(&self.k).map(|(c, &kn)| BigRational::new(kn.into(), c.height().clone().into())).collect()
    }

    /// Checks `P(α_i⋯α_j) ≥ 2^-k_n` at stage `n` for the given 1-based windows
    /// and `h_n ≥ 2^(k_n - 1)`; returns the first failing window.
    pub fn entropy_check(&self, n: usize, windows: &[(u64, u64)]) -> Result<Option<(u64, u64)>, ProcessError> {
        let c = self.stage(n)?;
        let kn = self.k[n];
        if c.height() < &(BigUint::one() << (kn - 1)) {
            return Ok(Some((0, 0)));
        }
        let mut counter = self.counter();
        for &(i, j) in windows {
            let len = (j - i + 1) as usize;
            let x = self.labels[n].extract(&BigUint::from(i), len)?;
            if self.block_prob_with(&mut counter, n, &x)? < Dyadic::pow2(-(kn as i64)) {
                return Ok(Some((i, j)));
            }
        }
        Ok(None)
    }

    /// Support measure of the top stage as an `f64`, for reporting.
    pub fn top_support_f64(&self) -> f64 {
        self.stages[self.top()].support_measure().to_f64()
    }

    /// Height of stage `n` as `u64`, if it fits.
    pub fn height_u64(&self, n: usize) -> Option<u64> {
        self.stages.get(n).and_then(|c| c.height().to_u64())
    }
}

fn check_unit(xi: &Dyadic) -> Result<(), ProcessError> {
    if DyadicInterval::unit().contains(xi) {
        Ok(())
    } else {
        Err(ProcessError::OutsideUnit(xi.clone()))
    }
}

fn extends(prev: &Column, next: &Column) -> bool {
    let doubled_prev = |c: &Column| match c.expr() {
        ColumnExpr::Doubled { column, .. } => column.same_node(prev),
        _ => false,
    };
    match next.expr() {
        ColumnExpr::Doubled { .. } => doubled_prev(next),
        ColumnExpr::Stacked(parts) => parts.first().is_some_and(|p| doubled_prev(p) || p.same_node(prev)),
        ColumnExpr::Base(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::parse_bits;
    use alloc::vec;

    fn small() -> ProcessHandle {
        // k = (1, 2, 3)
        let c0 = Column::base(slab_x1()).unwrap();
        let c1 = Column::stack(&c0.double(1), &Column::base(slab_a(1)).unwrap()).unwrap();
        let c2 = Column::stack(&c1.double(1), &Column::base(slab_a(2)).unwrap()).unwrap();
        ProcessHandle::new(ProcessKind::Theorem2, vec![1, 2, 3], vec![c0, c1, c2]).unwrap()
    }

    fn d(s: &str) -> Dyadic {
        s.parse().unwrap()
    }

    #[test]
    fn locate_examples() {
        let p = small();
        assert_eq!(p.locate(&d("3/4"), 0).unwrap().unwrap().0, BigUint::one());
        assert!(p.locate(&d("1/8"), 1).unwrap().is_none());
        assert!(p.locate(&d("1"), 1).is_err());
        assert!(matches!(p.locate(&d("1/2"), 3), Err(ProcessError::StageOutOfRange { .. })));
    }

    #[test]
    fn emission_from_bottom_level() {
        let p = small();
        let bottom = p.stage(2).unwrap().level_interval(&BigUint::zero()).unwrap();
        let bits = p.emit_symbols(bottom.lower(), 7).unwrap();
        assert_eq!(bits, parse_bits("1101100").unwrap());
        assert!(p.emit_symbols(bottom.lower(), 0).unwrap().is_empty());
        assert!(matches!(p.emit_symbols(bottom.lower(), 8), Err(ProcessError::InsufficientStages { .. })));
    }

    #[test]
    fn block_prob_examples() {
        let p = small();
        assert_eq!(p.block_prob(2, &parse_bits("11").unwrap()).unwrap(), d("1/4"));
        assert_eq!(p.block_prob(2, &[]).unwrap(), d("7/8"));
        assert_eq!(p.block_prob(2, &parse_bits("1001").unwrap()).unwrap(), Dyadic::zero());
        assert_eq!(p.block_prob(0, &parse_bits("11").unwrap()).unwrap(), Dyadic::zero());
    }

    #[test]
    fn rejects_non_extending() {
        let c0 = Column::base(slab_x1()).unwrap();
        let other = Column::base(slab_a(1)).unwrap();
        let err = ProcessHandle::new(ProcessKind::Theorem2, vec![1, 2], vec![c0, other.double(0)]);
        assert!(matches!(err, Err(ProcessError::WidthMismatch { .. }) | Err(ProcessError::NotExtending { .. })));
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = small();
        let a = p.sample_orbit(17, 1).unwrap();
        let b = p.sample_orbit(17, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tv_bound, Some(d("1/8")));
        let c = p.sample_orbit_from(17, 3, 1).unwrap();
        assert_eq!(c.tv_bound, Some(d("1/4")));
        assert_eq!(c.bits.len(), 3);
    }
}
