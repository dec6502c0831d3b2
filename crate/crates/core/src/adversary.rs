//! The stage-wise construction of a zero-entropy process that defeats a
//! finite family of estimators, with per-estimator falsification witnesses.
//!
//! Stage `n` asks every estimator `e ≤ min(n, E)` whether it claims
//! `P(0^m) < 2^-(⟨e,i⟩+2)` after reading the label suffix starting at level
//! `i` of `C_{n-1}`. Every claimed code `⟨e,i⟩` gets a fresh slab
//! `A_{⟨e,i⟩}` stacked on top, wide enough that its lower half alone gives
//! `P(0^m) ≥ 2^-(⟨e,i⟩+2)`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::column::{Column, ColumnExpr};
use crate::dyadic::Dyadic;
use crate::estimator::{fhat_bound, fhat_member_with, first_useful_k, Budgets, Estimator, FHatQuery};
use crate::label::PatternCounter;
use crate::process::{slab_a, slab_x1, ProcessError, ProcessHandle, ProcessKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdversaryError {
    #[error("witness does not match the trace: {0}")]
    TraceMismatch(String),
    #[error("k_{stage} = {k} exceeds the guard {limit}")]
    KTooLarge { stage: usize, k: u64, limit: u64 },
    #[error("no estimators supplied")]
    NoEstimators,
    #[error(transparent)]
    Process(#[from] ProcessError),
}

/// `⟨e, i⟩ = (e+i-2)(e+i-1)/2 + e`, a bijection `ℕ≥1 × ℕ≥1 → ℕ≥1`.
pub fn pairing(e: u64, i: u64) -> Option<u64> {
    if e == 0 || i == 0 {
        return None;
    }
    let s = (e - 1).checked_add(i - 1)?;
    let tri = (s as u128) * (s as u128 + 1) / 2 + e as u128;
    u64::try_from(tri).ok()
}

/// Inverse of [`pairing`].
pub fn unpairing(code: u64) -> Option<(u64, u64)> {
    if code == 0 {
        return None;
    }
    let c = code as u128 - 1;
    // largest s with s(s+1)/2 ≤ c
    let mut s = libm::sqrt((8 * c + 1) as f64) as u128 / 2;
    while s * (s + 1) / 2 > c {
        s -= 1;
    }
    while (s + 1) * (s + 2) / 2 <= c {
        s += 1;
    }
    let e = c - s * (s + 1) / 2 + 1;
    let i = s + 2 - e;
    Some((e as u64, i as u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdversaryConfig {
    pub stages: usize,
    pub budgets: Budgets,
    /// Most suffixes one estimator may need evaluated in one stage.
    pub suffix_cap: u64,
    /// Suffixes are cut to this many symbols before evaluation.
    pub suffix_len_cap: u64,
    pub max_k: u64,
}

impl Default for AdversaryConfig {
    fn default() -> AdversaryConfig {
        AdversaryConfig {
            stages: 8,
            budgets: Budgets::default(),
            suffix_cap: 1 << 14,
            suffix_len_cap: 1 << 20,
            max_k: 4096,
        }
    }
}

/// One `(⟨e,i⟩, m(e,i))` element of `F_n`, with the smallest `m` found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FEntry {
    pub code: u64,
    pub e: u64,
    pub i: u64,
    pub m: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageRecord {
    pub n: usize,
    pub k: u64,
    pub f: Vec<FEntry>,
    /// Codes newly handled at this stage, increasing.
    pub g: Vec<u64>,
    /// Suffixes evaluated per participating estimator.
    pub evaluated: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversaryTrace {
    pub tags: Vec<String>,
    pub config: AdversaryConfig,
    pub stages: Vec<StageRecord>,
}

impl AdversaryTrace {
    pub fn codes_used(&self) -> BTreeSet<u64> {
        self.stages.iter().flat_map(|s| s.g.iter().copied()).collect()
    }
}

/// Whether a probability is stated for `P` itself or for `P` rescaled by `1/λ(Ω₁)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    Raw,
    Normalized,
}

impl Normalization {
    pub fn name(self) -> &'static str {
        match self {
            Normalization::Raw => "raw",
            Normalization::Normalized => "normalized",
        }
    }
}

/// Certificate that estimator `e` claimed `(⟨e,i⟩, m) ∈ R` although `P(0^m) ≥ 2^-(⟨e,i⟩+2)`.
///
/// Raw lower bounds carry over to the normalized process, since `λ(Ω₁) ≤ 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FalsificationWitness {
    pub e: u64,
    pub tag: String,
    pub code: u64,
    pub i: u64,
    pub m: u64,
    pub claimed: Dyadic,
    pub proven: Dyadic,
    pub stage: usize,
    pub normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbortReport {
    pub stage: usize,
    pub estimator: u64,
    pub suffixes: BigUint,
    pub cap: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Witnessed(usize),
    /// Never claimed anything under the budgets.
    Silence,
}

pub struct AdversaryRun {
    pub process: ProcessHandle,
    pub trace: AdversaryTrace,
    pub witnesses: Vec<FalsificationWitness>,
    pub abort: Option<AbortReport>,
}

impl AdversaryRun {
    /// Verdict per estimator, in input order.
    pub fn verdicts(&self) -> Vec<Verdict> {
        (1..=self.trace.tags.len() as u64)
            .map(|e| match self.witnesses.iter().filter(|w| w.e == e).count() {
                0 => Verdict::Silence,
                c => Verdict::Witnessed(c),
            })
            .collect()
    }
}

fn ceil_log2(v: u64) -> u64 {
    64 - (v - 1).leading_zeros() as u64
}

/// Runs stages `1..=config.stages`, stopping early with an abort report if a
/// stage needs more suffix evaluations than `config.suffix_cap`.
pub fn build_adversary(
    estimators: &mut [&mut dyn Estimator],
    config: &AdversaryConfig,
) -> Result<AdversaryRun, AdversaryError> {
    if estimators.is_empty() {
        return Err(AdversaryError::NoEstimators);
    }
    let tags = estimators.iter().map(|f| f.tag()).collect();
    let mut columns = alloc::vec![Column::base(slab_x1()).expect("X1 is inside the unit interval")];
    let mut ks = alloc::vec![1u64];
    let mut used: BTreeSet<u64> = BTreeSet::new();
    let mut records = Vec::new();
    let mut pending = Vec::new();
    let mut abort = None;
    let max_m = config.budgets.m.min(config.suffix_len_cap);
    let zeros = alloc::vec![0u8; max_m as usize];

    'stages: for n in 1..=config.stages {
        let prev = &columns[n - 1];
        let h = prev.height().clone();
        let label = crate::label::LabelString::of_column(prev).map_err(ProcessError::from)?;
        let mut f_entries = Vec::new();
        let mut evaluated = Vec::new();
        let participants = n.min(estimators.len()) as u64;
        for e in 1..=participants {
            let est = &mut *estimators[e as usize - 1];
            let floor = est.value_floor();
            let viable = |i: u64| {
                pairing(e, i)
                    .and_then(|c| first_useful_k(floor.as_ref(), &fhat_bound(c).to_ratio()))
                    .is_some_and(|k0| k0 <= config.budgets.k)
            };
            // codes grow with i, so viability is a prefix of 1..=h
            let hmax = h.to_u64().unwrap_or(u64::MAX);
            let mut count = 0u64;
            while count < hmax && viable(count + 1) {
                count += 1;
                if count > config.suffix_cap {
                    abort = Some(AbortReport { stage: n, estimator: e, suffixes: h.clone(), cap: config.suffix_cap });
                    break 'stages;
                }
            }
            evaluated.push(count);
            for i in 1..=count {
                let code = pairing(e, i).expect("viable codes fit");
                let start = BigUint::from(i);
                let remaining = &h - &start + 1u32;
                let y = if est.uses_input() {
                    let len = remaining.to_u64().unwrap_or(u64::MAX).min(config.suffix_len_cap) as usize;
                    label.extract(&start, len).map_err(ProcessError::from)?
                } else {
                    Vec::new()
                };
                let mut found = None;
                for m in 1..=max_m {
                    let q = FHatQuery { n: code, m, y: &y, budgets: config.budgets };
                    if fhat_member_with(est, &q, &zeros[..m as usize]) {
                        found = Some(m);
                        break;
                    }
                }
                if let Some(m) = found {
                    f_entries.push(FEntry { code, e, i, m });
                }
            }
        }
        let g: Vec<u64> = f_entries
            .iter()
            .map(|f| f.code)
            .filter(|c| !used.contains(c))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let kprev = ks[n - 1];
        let (kn, column) = if g.is_empty() {
            (kprev + 1, prev.double(1))
        } else {
            let need = f_entries
                .iter()
                .filter(|f| g.contains(&f.code))
                .map(|f| f.code + 1 + ceil_log2(2 * f.m))
                .max()
                .expect("g is non-empty");
            let kn = need.max(kprev + 1);
            if kn > config.max_k {
                return Err(AdversaryError::KTooLarge { stage: n, k: kn, limit: config.max_k });
            }
            (kn, stage_column(prev, kprev, kn, &g)?)
        };
        for &c in &g {
            let entry = f_entries.iter().find(|f| f.code == c).expect("g comes from f");
            pending.push((n, entry.clone()));
            used.insert(c);
        }
        ks.push(kn);
        columns.push(column);
        records.push(StageRecord { n, k: kn, f: f_entries, g, evaluated });
    }

    let process = ProcessHandle::new(ProcessKind::Adversary, ks, columns)?;
    let mut witnesses = Vec::new();
    for (stage, entry) in pending {
        let mut counter = PatternCounter::new(entry.m as usize);
        let zeros_m = &zeros[..entry.m as usize];
        let proven = process.stage(stage)?.width().scale(&process.occurrences(&mut counter, stage, zeros_m)?);
        witnesses.push(FalsificationWitness {
            e: entry.e,
            tag: estimators[entry.e as usize - 1].tag(),
            code: entry.code,
            i: entry.i,
            m: entry.m,
            claimed: fhat_bound(entry.code),
            proven,
            stage,
            normalization: Normalization::Raw,
        });
    }
    let trace = AdversaryTrace { tags, config: *config, stages: records };
    Ok(AdversaryRun { process, trace, witnesses, abort })
}

/// `C_{n-1}(k_n - k_{n-1}) ∗ A_{c_1}(k_n - c_1 - 1) ∗ ⋯` over the codes `g`.
fn stage_column(prev: &Column, kprev: u64, kn: u64, g: &[u64]) -> Result<Column, ProcessError> {
    if g.is_empty() {
        return Ok(prev.double(kn - kprev));
    }
    let mut parts = alloc::vec![prev.double(kn - kprev)];
    for &c in g {
        let a = Column::base(slab_a(c)).expect("A_c is inside the unit interval");
        parts.push(a.double(kn - c - 1));
    }
    Ok(Column::stack_all(parts)?)
}

/// Rebuilds the process of a run from its trace alone.
pub fn rebuild_process(trace: &AdversaryTrace) -> Result<ProcessHandle, AdversaryError> {
    let mut columns = alloc::vec![Column::base(slab_x1()).expect("X1 is inside the unit interval")];
    let mut ks = alloc::vec![1u64];
    for (idx, record) in trace.stages.iter().enumerate() {
        let kprev = ks[idx];
        if record.n != idx + 1 || record.k <= kprev || record.g.iter().any(|&c| c + 1 > record.k) {
            return Err(AdversaryError::TraceMismatch(format!("stage {} is malformed", record.n)));
        }
        if record.g.is_empty() && record.k != kprev + 1 {
            return Err(AdversaryError::TraceMismatch(format!("stage {} doubles by more than one", record.n)));
        }
        let column = stage_column(&columns[idx], kprev, record.k, &record.g)?;
        ks.push(record.k);
        columns.push(column);
    }
    Ok(ProcessHandle::new(ProcessKind::Adversary, ks, columns)?)
}

/// Decides `P(0^m) < 2^-(n+2)` from the top stage where possible.
///
/// `P_s(0^m)` bounds `P(0^m)` from below; from above, `P(0^m)` exceeds
/// `P_s(0^m)` by at most the mass off `S(C_s)` plus `m - 1` straddling levels.
pub fn r_member(p: &ProcessHandle, n: u64, m: u64) -> Result<Option<bool>, AdversaryError> {
    let s = p.top();
    let zeros = alloc::vec![0u8; m as usize];
    let mut counter = PatternCounter::new((m as usize).max(1));
    let lo = p.width(s)?.scale(&p.occurrences(&mut counter, s, &zeros)?);
    let bound = fhat_bound(n);
    if lo >= bound {
        return Ok(Some(false));
    }
    let hi = &(&lo + &(Dyadic::one() - p.support_measure(s)?.clone()))
        + &p.width(s)?.scale(&BigUint::from(m.saturating_sub(1)));
    Ok(if hi < bound { Some(true) } else { None })
}

/// Individual outcomes of [`verify_witness`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WitnessCheck {
    /// The stacked slab `A_⟨e,i⟩` carries a zero run of length at least `2m`.
    pub zero_run: bool,
    /// Its lower half has measure exactly the claimed bound.
    pub half_measure: bool,
    /// `P_n(0^m) ≥` claimed bound, and the recorded lower bound is reproduced.
    pub block_prob: bool,
    /// The estimator still claims the pair on the recorded suffix.
    pub fhat: bool,
}

impl WitnessCheck {
    pub fn pass(&self) -> bool {
        self.zero_run && self.half_measure && self.block_prob && self.fhat
    }
}

/// Recomputes every claim of a witness from the process and the trace.
pub fn verify_witness(
    p: &ProcessHandle,
    trace: &AdversaryTrace,
    w: &FalsificationWitness,
    estimator: &mut dyn Estimator,
) -> Result<WitnessCheck, AdversaryError> {
    let mismatch = |s: &str| Err(AdversaryError::TraceMismatch(s.into()));
    let Some(record) = trace.stages.iter().find(|r| r.n == w.stage) else {
        return mismatch("stage not in trace");
    };
    if !record.g.contains(&w.code) {
        return mismatch("code not handled at this stage");
    }
    if unpairing(w.code) != Some((w.e, w.i)) {
        return mismatch("code does not encode (e, i)");
    }
    let Some(entry) = record.f.iter().find(|f| f.code == w.code) else {
        return mismatch("code missing from F");
    };
    if w.stage > p.top() || p.k()[w.stage] != record.k {
        return mismatch("process stages differ from the trace");
    }
    let n = w.stage;
    let kn = record.k;
    let c = p.stage(n)?;

    let slab = slab_a(w.code);
    let part = match c.expr() {
        ColumnExpr::Stacked(parts) => parts.iter().find(|part| match part.expr() {
            ColumnExpr::Doubled { column, .. } => matches!(column.expr(), ColumnExpr::Base(iv) if iv == &slab),
            ColumnExpr::Base(iv) => iv == &slab,
            _ => false,
        }),
        _ => None,
    };
    let Some(part) = part else {
        return mismatch("slab for the code is not stacked at this stage");
    };
    let run_len = part.height().clone();
    let expected_len = BigUint::one() << (kn - w.code - 1);
    let zero_run = run_len == expected_len
        && crate::label::LabelString::of_column(part)
            .ok()
            .and_then(|l| l.count_occurrences(&[1]).ok())
            .is_some_and(|ones| ones == BigUint::ZERO)
        && run_len >= BigUint::from(2 * w.m);
    let half = part.width().scale(&(&run_len >> 1u32));
    let half_measure = entry.m == w.m && half == fhat_bound(w.code) && w.claimed == half;

    let zeros = alloc::vec![0u8; w.m as usize];
    let mut counter = PatternCounter::new((w.m as usize).max(1));
    let pn = p.width(n)?.scale(&p.occurrences(&mut counter, n, &zeros)?);
    let block_prob = pn >= w.claimed && pn == w.proven;

    let prev_label = p.label(n - 1)?;
    let start = BigUint::from(w.i);
    let remaining = prev_label.len() - &start + 1u32;
    let y = if estimator.uses_input() {
        let len = remaining.to_u64().unwrap_or(u64::MAX).min(trace.config.suffix_len_cap) as usize;
        prev_label.extract(&start, len).map_err(ProcessError::from)?
    } else {
        Vec::new()
    };
    let q = FHatQuery { n: w.code, m: w.m, y: &y, budgets: trace.config.budgets };
    let fhat = crate::estimator::fhat_member(estimator, &q);
    Ok(WitnessCheck { zero_run, half_measure, block_prob, fhat })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageEntropy {
    pub n: usize,
    /// `h_n ≥ 2^(k_n - 1)`.
    pub height_ok: bool,
    pub windows_checked: usize,
    /// First window `(i, j)` with `P(α_i⋯α_j) < 2^-k_n`.
    pub failing_window: Option<(u64, u64)>,
}

impl StageEntropy {
    pub fn pass(&self) -> bool {
        self.height_ok && self.failing_window.is_none()
    }
}

/// Per stage: `h_n ≥ 2^(k_n-1)` and `P(α_i⋯α_j) ≥ 2^-k_n` on `samples` random
/// windows of length at most the pattern cap.
pub fn entropy_check(p: &ProcessHandle, samples: usize, seed: u64) -> Result<Vec<StageEntropy>, AdversaryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for n in 0..=p.top() {
        let h = p.height(n)?.clone();
        let kn = p.k()[n];
        let height_ok = h >= (BigUint::one() << (kn - 1));
        let hmax = h.to_u64().unwrap_or(u64::MAX);
        let cap = p.pattern_cap() as u64;
        let mut windows = Vec::with_capacity(samples);
        for _ in 0..samples {
            let i = rng.random_range(1..=hmax);
            let len = rng.random_range(1..=cap.min(hmax - i + 1));
            windows.push((i, i + len - 1));
        }
        let failing = p.entropy_check(n, &windows)?;
        out.push(StageEntropy { n, height_ok, windows_checked: windows.len(), failing_window: failing });
    }
    Ok(out)
}

/// Codes in increasing order with their `(e, i)`; handy for reports.
pub fn code_table(limit: u64) -> BTreeMap<u64, (u64, u64)> {
    (1..=limit).filter_map(|c| unpairing(c).map(|ei| (c, ei))).collect()
}
