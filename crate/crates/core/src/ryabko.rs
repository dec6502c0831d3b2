//! A ternary process driven by a countable-state Markov chain, and the
//! return-time estimator of its emission probabilities.
//!
//! `Y` moves from state `j` to `j + 1` or back to `0` with probability 1/2
//! each. `X_i = 0` when `Y_i = 0`; otherwise `X_i` is `1` with probability
//! `p_j` and `2` otherwise, where `j = Y_i`.

use alloc::vec::Vec;

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RyabkoError {
    #[error("probability {num}/{den} is not in [0, 1]")]
    BadProbability { num: u64, den: u64 },
    #[error("no probabilities supplied")]
    Empty,
    #[error("chain reached state {state} but only {known} probabilities are supplied")]
    StateBeyondSpec { state: u64, known: usize },
    #[error("j must be at least 1")]
    ZeroIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverflowPolicy {
    #[default]
    Fail,
    /// States past the supplied prefix reuse its last probability.
    RepeatLast,
}

/// `p_1, p_2, …` as exact fractions `num/den`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RyabkoSpec {
    p: Vec<(u64, u64)>,
}

impl RyabkoSpec {
    pub fn new(p: Vec<(u64, u64)>) -> Result<RyabkoSpec, RyabkoError> {
        if p.is_empty() {
            return Err(RyabkoError::Empty);
        }
        if let Some(&(num, den)) = p.iter().find(|(n, d)| *d == 0 || n > d) {
            return Err(RyabkoError::BadProbability { num, den });
        }
        Ok(RyabkoSpec { p })
    }

    pub fn probabilities(&self) -> &[(u64, u64)] {
        &self.p
    }

    pub fn p(&self, j: usize) -> Option<BigRational> {
        self.p.get(j.checked_sub(1)?).map(|&(n, d)| BigRational::new(n.into(), d.into()))
    }
}

/// `X_1 ⋯ X_len` with `Y_1 = 0`.
pub fn sample_ryabko(spec: &RyabkoSpec, seed: u64, len: usize, policy: OverflowPolicy) -> Result<Vec<u8>, RyabkoError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(len);
    let mut state = 0u64;
    for step in 0..len {
        if step > 0 {
            state = if rng.random::<bool>() { state + 1 } else { 0 };
        }
        if state == 0 {
            out.push(0);
            continue;
        }
        let idx = (state - 1) as usize;
        let &(num, den) = match (spec.p.get(idx), policy) {
            (Some(p), _) => p,
            (None, OverflowPolicy::RepeatLast) => spec.p.last().expect("non-empty"),
            (None, OverflowPolicy::Fail) => {
                return Err(RyabkoError::StateBeyondSpec { state, known: spec.p.len() });
            }
        };
        out.push(if rng.random_range(0..den) < num { 1 } else { 2 });
    }
    Ok(out)
}

/// 1-based `i` with `X_i = 0`, `X_k ≠ 0` for `i < k ≤ i + j`, and `i + j ≤ len`.
pub fn extract_ij(bits: &[u8], j: usize) -> Vec<usize> {
    let mut out = Vec::new();
    // nonzero run length starting right after each position, scanned backwards
    let mut run_after = 0usize;
    for idx in (0..bits.len()).rev() {
        if bits[idx] == 0 && run_after >= j {
            out.push(idx + 1);
        }
        run_after = if bits[idx] == 0 { 0 } else { run_after + 1 };
    }
    out.reverse();
    out
}

/// `⌈2k² ln(20k)⌉`: indices needed before the estimate of `p_j` is frozen.
pub fn freeze_size(k: u64) -> u64 {
    let k = k as f64;
    libm::ceil(2.0 * k * k * libm::log(20.0 * k)) as u64
}

/// Frequency of `1` among `X_{i+j}`, `i` ranging over the first
/// `freeze_size(k)` elements of `I_j`; `None` until that many exist.
pub fn estimate_pj(bits: &[u8], j: usize, k: u64) -> Result<Option<BigRational>, RyabkoError> {
    if j == 0 {
        return Err(RyabkoError::ZeroIndex);
    }
    let need = freeze_size(k.max(1)) as usize;
    let idx = extract_ij(bits, j);
    if idx.len() < need {
        return Ok(None);
    }
    let ones = idx[..need].iter().filter(|&&i| bits[i + j - 1] == 1).count();
    Ok(Some(BigRational::new(ones.into(), need.into())))
}
