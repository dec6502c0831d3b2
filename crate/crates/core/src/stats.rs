//! Block frequencies on orbits and deviation-rate curves.

use alloc::vec::Vec;
use core::ops::ControlFlow;

use num_bigint::BigInt;
use num_rational::BigRational;

use crate::dyadic::Dyadic;
use crate::label::count_in;
use crate::process::{Enclosure, ProcessError, ProcessHandle};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("input of length {bits} is shorter than the pattern of length {pattern}")]
    TooShort { bits: usize, pattern: usize },
    #[error("lengths must be positive and at least the pattern length")]
    BadLength,
    #[error(transparent)]
    Process(#[from] ProcessError),
}

/// Occurrences of `x` divided by the number of windows `|bits| - |x| + 1`.
pub fn empirical_freq(bits: &[u8], x: &[u8]) -> Result<BigRational, StatsError> {
    if bits.len() < x.len() {
        return Err(StatsError::TooShort { bits: bits.len(), pattern: x.len() });
    }
    let slots = (bits.len() - x.len() + 1) as u64;
    let hits = if x.is_empty() { slots } else { count_in(bits, x) };
    Ok(BigRational::new(hits.into(), slots.into()))
}

/// Wilson score interval for `successes` out of `trials` at `z` standard deviations.
pub fn wilson(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * libm::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Whether an empirical frequency is at least `1/k` away from `P(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deviation {
    Yes,
    No,
    /// Depends on where `P(x)` lies inside its enclosure.
    Undetermined,
}

pub fn classify(freq: &BigRational, target: &Enclosure, k: u64) -> Deviation {
    let tol = BigRational::new(BigInt::from(1), k.into());
    let lo = target.lo.to_ratio();
    let hi = target.hi.to_ratio();
    if freq >= &(&hi + &tol) || freq <= &(&lo - &tol) {
        Deviation::Yes
    } else if freq - &lo < tol && &hi - freq < tol {
        Deviation::No
    } else {
        Deviation::Undetermined
    }
}

/// Deviation outcome at each of `lengths` (increasing) for one sampled orbit.
pub fn rate_trial(
    p: &ProcessHandle,
    x: &[u8],
    k: u64,
    lengths: &[u64],
    target: &Enclosure,
    seed: u64,
    sample_stage: usize,
) -> Result<Vec<Deviation>, StatsError> {
    let Some(&max) = lengths.last() else { return Ok(Vec::new()) };
    if lengths.iter().any(|&l| l == 0 || (l as usize) < x.len()) || lengths.windows(2).any(|w| w[0] > w[1]) {
        return Err(StatsError::BadLength);
    }
    let start = p.sample_start(seed, sample_stage)?;
    let mut out = Vec::with_capacity(lengths.len());
    let mut hits = 0u64;
    let mut seen = 0u64;
    // last |x| - 1 symbols, to catch occurrences across chunk boundaries
    let mut carry: Vec<u8> = Vec::new();
    let mut next = 0usize;
    p.emit_with(&start, max, 1 << 16, |chunk| {
        let mut offset = 0usize;
        while offset < chunk.len() {
            let target_len = lengths[next];
            let take = ((target_len - seen) as usize).min(chunk.len() - offset);
            let piece = &chunk[offset..offset + take];
            let mut joined = core::mem::take(&mut carry);
            joined.extend_from_slice(piece);
            if !x.is_empty() {
                hits += count_in(&joined, x);
                let keep = (x.len() - 1).min(joined.len());
                carry = joined[joined.len() - keep..].to_vec();
            }
            seen += take as u64;
            offset += take;
            while next < lengths.len() && seen == lengths[next] {
                let slots = seen - x.len() as u64 + 1;
                let h = if x.is_empty() { slots } else { hits };
                out.push(classify(&BigRational::new(h.into(), slots.into()), target, k));
                next += 1;
            }
            if next == lengths.len() {
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    })?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub length: u64,
    pub trials: u64,
    pub deviations: u64,
    pub undetermined: u64,
    pub fraction: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Aggregates per-trial outcomes (one row per trial) into curve points with
/// Wilson intervals at `z = 3`.
pub fn aggregate(lengths: &[u64], outcomes: &[Vec<Deviation>]) -> Vec<CurvePoint> {
    lengths
        .iter()
        .enumerate()
        .map(|(col, &length)| {
            let trials = outcomes.len() as u64;
            let deviations = outcomes.iter().filter(|o| o[col] == Deviation::Yes).count() as u64;
            let undetermined = outcomes.iter().filter(|o| o[col] == Deviation::Undetermined).count() as u64;
            let (ci_lo, ci_hi) = wilson(deviations, trials, 3.0);
            let fraction = if trials == 0 { 0.0 } else { deviations as f64 / trials as f64 };
            CurvePoint { length, trials, deviations, undetermined, fraction, ci_lo, ci_hi }
        })
        .collect()
}

/// Fraction of `trials` orbits whose frequency of `x` deviates from `P(x)` by at least `1/k`.
///
/// Trial `t` uses seed `seed + t`; start points are uniform on `S(C_{sample_stage})`.
#[allow(clippy::too_many_arguments)]
pub fn rate_curve(
    p: &ProcessHandle,
    x: &[u8],
    k: u64,
    lengths: &[u64],
    trials: u64,
    seed: u64,
    target: &Enclosure,
    sample_stage: usize,
) -> Result<Vec<CurvePoint>, StatsError> {
    let outcomes = (0..trials)
        .map(|t| rate_trial(p, x, k, lengths, target, seed.wrapping_add(t), sample_stage))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(lengths, &outcomes))
}

/// An enclosure holding a single exact value.
pub fn exact_target(x: &[u8], value: Dyadic) -> Enclosure {
    Enclosure { x: x.to_vec(), lo: value.clone(), hi: value, stage: 0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::parse_bits;
    use crate::slowrate::{build_theorem2, KSequence};

    #[test]
    fn frequencies() {
        let b = parse_bits("1101100").unwrap();
        assert_eq!(empirical_freq(&b, &[1, 1]).unwrap(), BigRational::new(2.into(), 6.into()));
        assert_eq!(empirical_freq(&b, &b).unwrap(), BigRational::from_integer(1.into()));
        assert_eq!(empirical_freq(&[0, 0, 0, 0], &[1]).unwrap(), BigRational::from_integer(0.into()));
        assert!(empirical_freq(&[0], &[0, 0]).is_err());
    }

    #[test]
    fn wilson_brackets_proportion() {
        let (lo, hi) = wilson(50, 100, 3.0);
        assert!(lo < 0.5 && hi > 0.5);
        assert_eq!(wilson(0, 100, 3.0).0, 0.0);
    }

    #[test]
    fn precision_one_never_deviates() {
        let p = build_theorem2(&KSequence::gap_i(5), 5).unwrap();
        let target = exact_target(&[0], Dyadic::pow2(-1));
        let curve = rate_curve(&p, &[0], 1, &[1, 4, 16], 50, 1, &target, 4).unwrap();
        assert!(curve.iter().all(|c| c.deviations == 0));
        let again = rate_curve(&p, &[0], 1, &[1, 4, 16], 50, 1, &target, 4).unwrap();
        assert_eq!(curve, again);
    }

    #[test]
    fn chunked_counting_matches_direct() {
        let p = build_theorem2(&KSequence::gap_i(6), 6).unwrap();
        let x = parse_bits("101").unwrap();
        let target = exact_target(&x, Dyadic::pow2(-3));
        let lengths = [10, 70_000, 140_000];
        let outcome = rate_trial(&p, &x, 1000, &lengths, &target, 3, 5).unwrap();
        let start = p.sample_start(3, 5).unwrap();
        let bits = p.emit_symbols(&start, 140_000).unwrap();
        for (o, &l) in outcome.iter().zip(&lengths) {
            let f = empirical_freq(&bits[..l as usize], &x).unwrap();
            assert_eq!(*o, classify(&f, &target, 1000));
        }
    }
}
