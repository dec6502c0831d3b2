//! Invariant checks shared by the `verify` command and the test suites.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::column::{Column, ColumnError, MATERIALIZE_LIMIT};
use crate::dyadic::Dyadic;
use crate::process::{ProcessError, ProcessHandle};
use crate::slowrate::{closed_form, KSequence, RunKind, SlowRateError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: String, pass: bool, detail: String) -> CheckResult {
        CheckResult { name, pass, detail }
    }
}

/// Levels `nh+1 ..= (n+1)h` of `C(k)` meet `⋃_{j∈J} L_j` exactly in the
/// levels `j + nh`, `j ∈ J`, with measure `2^-k · λ(⋃_{j∈J} L_j)`.
///
/// `j_set` is 1-based; `block` ranges over `0 .. 2^k`.
pub fn doubling_shift_holds(c: &Column, j_set: &[u64], k: u64, block: u64) -> Result<bool, ColumnError> {
    let h = c
        .height_u64()
        .filter(|&h| h <= MATERIALIZE_LIMIT)
        .ok_or_else(|| ColumnError::TooTall { height: c.height().clone(), limit: MATERIALIZE_LIMIT })?;
    if block >= 1u64 << k.min(63) || j_set.iter().any(|&j| j == 0 || j > h) {
        return Ok(false);
    }
    let levels = c.levels(h)?;
    let doubled = c.double(k);
    let shifted = |j: u64| doubled.level_interval(&BigUint::from(block * h + j - 1)).expect("level in range");

    let mut measure = Dyadic::zero();
    let mut hit = Vec::new();
    for i in 1..=h {
        let level = shifted(i);
        if !levels[(i - 1) as usize].contains_interval(&level) {
            return Ok(false);
        }
        for &j in j_set {
            if let Some(piece) = level.intersect(&levels[(j - 1) as usize]) {
                if piece != level {
                    return Ok(false);
                }
                measure = &measure + &piece.width();
                hit.push(i);
            }
        }
    }
    let mut wanted: Vec<u64> = j_set.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    hit.sort_unstable();
    hit.dedup();
    let union: Dyadic = wanted.iter().fold(Dyadic::zero(), |acc, &j| &acc + &levels[(j - 1) as usize].width());
    Ok(hit == wanted && measure == union.mul_pow2(-(k as i64)))
}

/// `s(C_n) = s(C_{n-1})^{2^{k_n - k_{n-1}}} 0^{h_n - 2^{k_n - k_{n-1}} h_{n-1}}`,
/// compared in full when materializable and at `samples` random positions otherwise.
pub fn label_recursion_holds(p: &ProcessHandle, n: usize, samples: usize, seed: u64) -> Result<bool, ProcessError> {
    if n == 0 || n > p.top() {
        return Err(ProcessError::StageOutOfRange { stage: n, built: p.top() });
    }
    let d = p.k()[n] - p.k()[n - 1];
    let prev = p.label(n - 1)?;
    let cur = p.label(n)?;
    let hp = prev.len().clone();
    let repeated = &hp << d;
    let h = cur.len().clone();
    if h < repeated {
        return Ok(false);
    }
    if h <= BigUint::from(MATERIALIZE_LIMIT) {
        let prev_bits = prev.materialize(MATERIALIZE_LIMIT)?;
        let cur_bits = cur.materialize(MATERIALIZE_LIMIT)?;
        let reps = 1usize << d;
        let mut expected = Vec::with_capacity(cur_bits.len());
        for _ in 0..reps {
            expected.extend_from_slice(&prev_bits);
        }
        expected.resize(cur_bits.len(), 0);
        return Ok(expected == cur_bits);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hmax = h.to_u64();
    let mut positions: Vec<BigUint> = alloc::vec![BigUint::one(), h.clone(), repeated.clone()];
    if repeated < h {
        positions.push(&repeated + 1u32);
    }
    for _ in 0..samples {
        let pos = match hmax {
            Some(hm) => BigUint::from(rng.random_range(1..=hm)),
            None => {
                let mut bytes = (h.bits() / 8 + 1) as usize;
                bytes = bytes.max(1);
                let raw: Vec<u8> = (0..bytes).map(|_| rng.random()).collect();
                BigUint::from_bytes_le(&raw) % &h + 1u32
            }
        };
        positions.push(pos);
    }
    for pos in positions {
        let got = cur.extract(&pos, 1)?[0];
        let want = if pos <= repeated {
            let offset = (&pos - 1u32) % &hp + 1u32;
            prev.extract(&offset, 1)?[0]
        } else {
            0
        };
        if got != want {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `w(C_n) = 2^-k_n`, `λ(S(C_n)) = support`, and `h(C_n)·w(C_n) = λ(S(C_n))`.
pub fn bookkeeping_holds(p: &ProcessHandle, n: usize, support: &Dyadic) -> Result<bool, ProcessError> {
    let w = p.width(n)?;
    let h = p.height(n)?;
    let s = p.support_measure(n)?;
    Ok(w == &Dyadic::pow2(-(p.k()[n] as i64)) && s == support && &w.scale(h) == s)
}

/// `1 - 2^-(n+1)`
pub fn theorem2_support(n: usize) -> Dyadic {
    Dyadic::one() - Dyadic::pow2(-(n as i64 + 1))
}

/// `k_n / h_n` is positive, decreasing from stage 2 on, and at most `k_n 2^{1-k_n}`.
pub fn entropy_profile_holds(p: &ProcessHandle) -> Result<bool, ProcessError> {
    let profile = p.entropy_profile();
    let positive = profile.iter().all(|q| q > &num_rational::BigRational::zero());
    let decreasing = profile.windows(2).skip(2).all(|w| w[1] < w[0]);
    let bounded = p.entropy_check(0, &[])?.is_none()
        && (0..=p.top()).all(|n| {
            let kn = p.k()[n];
            p.height(n).is_ok_and(|h| h >= &(BigUint::one() << (kn - 1)))
        });
    let trending = profile.len() < 2 || profile.last() < profile.first();
    Ok(positive && decreasing && bounded && trending)
}

/// Enclosures of `P(0 1^{2^{k_1-1}} 0)` and `P(1 0^{f(n)} 1)` at the top stage
/// against their exact values, for every `n < top` with `n ≤ max_n` whose
/// pattern fits `max_len`.
pub fn closed_form_checks(
    p: &ProcessHandle,
    k: &KSequence,
    max_n: usize,
    max_len: usize,
) -> Result<Vec<CheckResult>, SlowRateError> {
    let mut out = Vec::new();
    let top = p.top();
    if top < 1 {
        return Ok(out);
    }
    let mut counter = crate::label::PatternCounter::new(max_len.max(2));
    let mut check =
        |name: String, x: Vec<u8>, value: Dyadic, out: &mut Vec<CheckResult>| -> Result<(), SlowRateError> {
            let enc = p.stage_enclosure(&mut counter, top, &x)?;
            let pass = enc.contains(&value);
            out.push(CheckResult::new(name, pass, format!("value {value} in [{}, {}] at stage {top}", enc.lo, enc.hi)));
            Ok(())
        };
    let k1 = k.values()[1];
    if k1 <= 16 && (1usize << (k1 - 1)) + 2 <= max_len {
        let m = 1usize << (k1 - 1);
        let mut x = alloc::vec![0u8];
        x.resize(m + 1, 1);
        x.push(0);
        let value = closed_form(k, RunKind::OneRun, &BigUint::from(m))?;
        check(format!("P(01^{m}0)"), x, value, &mut out)?;
    }
    for n in 1..=max_n.min(k.top().min(top) - 1) {
        let f = k.f(n)?;
        let Some(f) = f.to_usize().filter(|&f| f + 2 <= max_len) else { break };
        let value = closed_form(k, RunKind::ZeroRun, &BigUint::from(f))?;
        check(format!("P(10^{f}1)"), zero_run(f), value, &mut out)?;
    }
    Ok(out)
}

/// `1 0^m 1`
pub fn zero_run(m: usize) -> Vec<u8> {
    let mut x = alloc::vec![1u8];
    x.resize(m + 1, 0);
    x.push(1);
    x
}

/// The invariant suite for a process built from a k-sequence.
pub fn verify_theorem2(p: &ProcessHandle, k: &KSequence, seed: u64) -> Result<Vec<CheckResult>, SlowRateError> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 0..=p.top() {
        let ok = bookkeeping_holds(p, n, &theorem2_support(n))?;
        out.push(CheckResult::new(
            format!("bookkeeping C_{n}"),
            ok,
            format!("k_{n} = {}, h = {}", p.k()[n], p.height(n)?),
        ));
    }
    for n in 1..=p.top() {
        let ok = label_recursion_holds(p, n, 64, rng.random())?;
        out.push(CheckResult::new(format!("label recursion C_{n}"), ok, String::new()));
    }
    out.extend(doubling_shift_sweep(p, 20, &mut rng)?);
    out.extend(closed_form_checks(p, k, 6, 1 << 16)?);
    let ok = entropy_profile_holds(p)?;
    out.push(CheckResult::new("entropy profile".into(), ok, String::new()));
    Ok(out)
}

/// The doubling shift identity on random `(stage, J, k, block)` drawn from materializable stages.
pub fn doubling_shift_sweep(
    p: &ProcessHandle,
    instances: usize,
    rng: &mut impl Rng,
) -> Result<Vec<CheckResult>, ProcessError> {
    let small: Vec<usize> = (0..=p.top()).filter(|&n| p.height_u64(n).is_some_and(|h| h <= 1 << 12)).collect();
    let mut out = Vec::new();
    if small.is_empty() {
        return Ok(out);
    }
    let mut passed = 0;
    let mut first_fail = None;
    for _ in 0..instances {
        let n = small[rng.random_range(0..small.len())];
        let c = p.stage(n)?;
        let h = c.height_u64().expect("small");
        let j_set: Vec<u64> = (1..=h).filter(|_| rng.random::<bool>()).collect();
        let k = rng.random_range(0..=3u64);
        let block = rng.random_range(0..1u64 << k);
        if doubling_shift_holds(c, &j_set, k, block)? {
            passed += 1;
        } else if first_fail.is_none() {
            first_fail = Some((n, k, block));
        }
    }
    let detail = match first_fail {
        Some((n, k, b)) => format!("{passed}/{instances}; first failure on C_{n}, k = {k}, block {b}"),
        None => format!("{passed}/{instances}"),
    };
    out.push(CheckResult::new("doubling shift".into(), first_fail.is_none(), detail));
    Ok(out)
}
