//! Acceptance run: one PASS/FAIL line per criterion, each with its pinned
//! tolerance and time budget. `cargo test --test acceptance -- 3 7` runs a
//! subset.
//!
//! Criterion 3 asks for enclosures containing `2^-k_n` as the value of
//! `P(1 0^{f(n)} 1)`. The exact value is `2^-k_n - 2^-k_{n+1}` (the level
//! where the run can start has measure `2^-k_n`, and its top `2^-k_{n+1}`
//! sits under a longer run), so for the smallest `n` the stated number lies
//! outside any enclosure of width `2^-12`. The criterion is evaluated as
//! stated and is expected to fail; the corrected values are checked in the
//! same line.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::ControlFlow;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cutstack_core::adversary::{build_adversary, pairing, verify_witness, AdversaryConfig};
use cutstack_core::audit::{doubling_shift_holds, zero_run};
use cutstack_core::column::Column;
use cutstack_core::dyadic::Dyadic;
use cutstack_core::estimator::{
    fhat_member, Budgets, ConstantEstimator, EmpiricalEstimator, Estimator, FHatQuery, GrowthRule,
};
use cutstack_core::label::PatternCounter;
use cutstack_core::process::ProcessHandle;
use cutstack_core::ryabko::{estimate_pj, sample_ryabko, OverflowPolicy, RyabkoSpec};
use cutstack_core::slowrate::{
    b_intersection_measure, build_theorem2, choose_k_for_rate, closed_form, g_from_process, h_prime,
    slowrate_certificate, BuiltinRate, KRecovery, KSequence, Rate, RunKind,
};
use cutstack_core::stats::{exact_target, rate_trial, wilson, Deviation};
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria whose literal statement does not hold; they must report FAIL.
const KNOWN_UNATTAINABLE: &[u32] = &[3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn ratio(a: u64, b: u64) -> BigRational {
    BigRational::new(a.into(), b.into())
}

fn brute_count(text: &[u8], pattern: &[u8]) -> u64 {
    if pattern.len() > text.len() {
        return 0;
    }
    (0..=text.len() - pattern.len()).filter(|&i| &text[i..i + pattern.len()] == pattern).count() as u64
}

fn bits(s: &str) -> Vec<u8> {
    s.bytes().map(|b| b - b'0').collect()
}

// 1. Labels of the first stages, exactly.
fn labels() -> Outcome {
    let cases: [(&[u64], &[&str]); 2] =
        [(&[1, 2, 3], &["1", "110", "1101100"]), (&[1, 2, 4], &["1", "110", "11011011011000"])];
    for (k, want) in cases {
        let p = build_theorem2(&KSequence::new(k.to_vec()).unwrap(), 2).unwrap();
        for (n, w) in want.iter().enumerate() {
            let got = p.label(n).unwrap().materialize(1 << 10).unwrap();
            if got != bits(w) {
                return outcome(false, format!("k = {k:?}: s(C_{n}) differs from {w}"));
            }
        }
    }
    outcome(true, "s(C_0..C_2) = 1, 110, 1101100 for k = (1,2,3); s(C_2) = 11011011011000 for k = (1,2,4)")
}

// 2. Width, support and height of every stage of random k sequences.
fn bookkeeping() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..10 {
        let mut k = vec![1u64];
        for _ in 0..10 {
            k.push(k.last().unwrap() + rng.random_range(1..=6));
        }
        let p = build_theorem2(&KSequence::new(k.clone()).unwrap(), 10).unwrap();
        for n in 0..=10usize {
            let kn = k[n];
            let w_ok = p.width(n).unwrap() == &Dyadic::new(1.into(), kn);
            // λ(S) · 2^(n+1) = 2^(n+1) - 1
            let s = p.support_measure(n).unwrap().to_ratio();
            let s_ok = s * BigRational::from_integer((1u64 << (n + 1)).into())
                == BigRational::from_integer(((1u64 << (n + 1)) - 1).into());
            // h · 2^(n+1) = 2^k_n · (2^(n+1) - 1)
            let h_ok = p.height(n).unwrap() << (n + 1) == (BigUint::one() << kn) * ((1u64 << (n + 1)) - 1);
            if !(w_ok && s_ok && h_ok) {
                return outcome(
                    false,
                    format!("sequence {trial} {k:?}, stage {n}: width {w_ok}, support {s_ok}, height {h_ok}"),
                );
            }
        }
    }
    outcome(true, "10 random sequences × 11 stages, exact equality")
}

// 3. Run probabilities against enclosures of width at most 2^-12.
fn run_probabilities() -> Outcome {
    let k = KSequence::gap_i(12);
    let p = build_theorem2(&k, 12).unwrap();
    let eps = Dyadic::pow2(-12);
    let mut counter = PatternCounter::new(1 << 16);
    let mut literal_misses = Vec::new();
    let mut corrected_ok = true;
    let mut widths_ok = true;

    let k1 = k.values()[1];
    let b = 1usize << (k1 - 1);
    let mut x = vec![0u8];
    x.extend(std::iter::repeat_n(1, b));
    x.push(0);
    let enc = p.block_prob_limit_with(&mut counter, &x, &eps).unwrap();
    widths_ok &= enc.width() <= eps;
    if !enc.contains(&Dyadic::pow2(-(k1 as i64))) {
        literal_misses.push(format!("P(01^{b}0)"));
    }
    corrected_ok &= enc.contains(&closed_form(&k, RunKind::OneRun, &BigUint::from(b)).unwrap());

    for n in 1..=6usize {
        let f = k.f(n).unwrap();
        let x = zero_run(f.to_usize().unwrap());
        let enc = p.block_prob_limit_with(&mut counter, &x, &eps).unwrap();
        widths_ok &= enc.width() <= eps;
        let kn = k.values()[n];
        if !enc.contains(&Dyadic::pow2(-(kn as i64))) {
            literal_misses.push(format!("n={n}: 2^-{kn} outside [{}, {}]", enc.lo, enc.hi));
        }
        let exact = Dyadic::pow2(-(kn as i64)) - Dyadic::pow2(-(k.values()[n + 1] as i64));
        corrected_ok &= enc.contains(&exact);
    }
    let pass = literal_misses.is_empty() && widths_ok;
    let detail = format!(
        "width ≤ 2^-12: {widths_ok}; stated values missed: [{}]; exact values 2^-k_n - 2^-k_(n+1) all contained: {corrected_ok}",
        literal_misses.join("; ")
    );
    outcome(pass && corrected_ok, detail)
}

// 4. Grammar counting and extraction against scans of the expanded labels.
fn grammar_vs_scan() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let processes = [
        build_theorem2(&KSequence::gap_i(6), 6).unwrap(),
        build_theorem2(&KSequence::new(vec![1, 3, 5, 8, 12, 17, 20]).unwrap(), 6).unwrap(),
    ];
    let patterns: Vec<Vec<u8>> =
        (0..200).map(|_| (0..rng.random_range(1..=16)).map(|_| rng.random_range(0..2u8)).collect()).collect();
    let mut stages = 0;
    for p in &processes {
        for n in 0..=p.top() {
            let Some(h) = p.height_u64(n).filter(|&h| h <= 1 << 20) else { continue };
            stages += 1;
            let label = p.label(n).unwrap();
            let text = label.materialize(1 << 20).unwrap();
            if text.len() as u64 != h {
                return outcome(false, format!("stage {n} expands to {} symbols, height {h}", text.len()));
            }
            for x in &patterns {
                if x.len() > text.len() {
                    if label.count_occurrences(x).is_ok() {
                        return outcome(false, format!("stage {n}: pattern longer than the label was counted"));
                    }
                    continue;
                }
                let got = label.count_occurrences(x).unwrap();
                if got != BigUint::from(brute_count(&text, x)) {
                    return outcome(false, format!("stage {n}, pattern {x:?}: count {got}"));
                }
                let len = x.len().min(text.len());
                let start = rng.random_range(0..=text.len() - len);
                let piece = label.extract(&BigUint::from(start + 1), len).unwrap();
                if piece[..] != text[start..start + len] {
                    return outcome(false, format!("stage {n}: extract at {} differs", start + 1));
                }
            }
        }
    }
    outcome(true, format!("{stages} stages × 200 patterns, counts and extracts equal"))
}

/// Level sets of `C` against those of `C(k)`, computed directly.
fn shift_and_scale_direct(c: &Column, j_set: &BTreeSet<u64>, k: u64, block: u64) -> bool {
    let h = c.height_u64().unwrap();
    let base = c.levels(h).unwrap();
    let doubled = c.double(k).levels(h << k).unwrap();
    let union_width = j_set.iter().fold(Dyadic::zero(), |acc, &j| &acc + &base[j as usize - 1].width());
    let mut hit = BTreeSet::new();
    let mut measure = Dyadic::zero();
    for i in block * h + 1..=(block + 1) * h {
        let level = &doubled[i as usize - 1];
        let mut covered = Dyadic::zero();
        for &j in j_set {
            if let Some(piece) = level.intersect(&base[j as usize - 1]) {
                covered = &covered + &piece.width();
            }
        }
        if covered.is_zero() {
            continue;
        }
        if covered != level.width() {
            return false;
        }
        hit.insert(i);
        measure = &measure + &covered;
    }
    let shifted: BTreeSet<u64> = j_set.iter().map(|j| j + block * h).collect();
    hit == shifted && measure == union_width.mul_pow2(-(k as i64))
}

// 5. Shift-and-scale of level sets under doubling.
fn doubling_shift() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut columns: Vec<Column> = Vec::new();
    for _ in 0..4 {
        let mut k = vec![1u64];
        for _ in 0..4 {
            k.push(k.last().unwrap() + rng.random_range(1..=3));
        }
        let p = build_theorem2(&KSequence::new(k).unwrap(), 4).unwrap();
        columns.extend(p.stages().iter().filter(|c| c.height_u64().is_some_and(|h| h <= 1 << 9)).cloned());
    }
    let mut zero = ConstantEstimator::new(BigRational::zero());
    let cfg =
        AdversaryConfig { stages: 4, budgets: Budgets { k: 64, m: 16, steps: 1 << 16 }, ..AdversaryConfig::default() };
    let adv = build_adversary(&mut [&mut zero], &cfg).unwrap();
    columns.extend(adv.process.stages().iter().filter(|c| c.height_u64().is_some_and(|h| h <= 1 << 9)).cloned());

    for t in 0..100 {
        let c = &columns[rng.random_range(0..columns.len())];
        let h = c.height_u64().unwrap();
        let mut j_set: BTreeSet<u64> = (1..=h).filter(|_| rng.random::<bool>()).collect();
        if j_set.is_empty() {
            j_set.insert(rng.random_range(1..=h));
        }
        let k = rng.random_range(0..=4u64);
        let block = rng.random_range(0..1u64 << k);
        let direct = shift_and_scale_direct(c, &j_set, k, block);
        let library = doubling_shift_holds(c, &j_set.iter().copied().collect::<Vec<_>>(), k, block).unwrap();
        if !(direct && library) {
            return outcome(
                false,
                format!("instance {t}: height {h}, k = {k}, block {block}: direct {direct}, library {library}"),
            );
        }
    }
    outcome(true, format!("100 instances over {} columns, exact", columns.len()))
}

// 6. K recovery and g on sampled orbits.
fn g_end_to_end() -> Outcome {
    const ORBITS: u64 = 10_000;
    let k = KSequence::gap_i(9);
    let p = build_theorem2(&k, 9).unwrap();
    let want: Vec<u64> = k.values()[..=6].to_vec();
    let cap = p.height_u64(6).unwrap() + k.f(6).unwrap().to_u64().unwrap() + 4;

    let reference = build_theorem2(&KSequence::gap_i(12), 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let queries: Vec<(Vec<u8>, u64)> = (0..20)
        .map(|_| ((0..rng.random_range(1..=5)).map(|_| rng.random_range(0..2u8)).collect(), rng.random_range(2..=16)))
        .collect();
    let mut ref_counter = PatternCounter::new(16);
    let truth: Vec<_> = queries
        .iter()
        .map(|(x, _)| reference.block_prob_limit_with(&mut ref_counter, x, &Dyadic::pow2(-12)).unwrap())
        .collect();

    let mut full = 0u64;
    let mut g_misses = 0u64;
    let mut g_cache: BTreeMap<Vec<u64>, bool> = BTreeMap::new();
    for seed in 0..ORBITS {
        let start = p.sample_start(seed, 8).unwrap();
        let mut rec = KRecovery::new();
        let emitted = p.emit_with(&start, cap, 1 << 16, |chunk| {
            if rec.feed(chunk).is_err() || rec.table().get(6).is_some() {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        if emitted.is_err() {
            continue;
        }
        let prefix = rec.table().prefix();
        if prefix.len() < 7 || prefix[..7] != want[..] {
            continue;
        }
        full += 1;
        let ok = *g_cache.entry(prefix[..7].to_vec()).or_insert_with(|| {
            let q = build_theorem2(&KSequence::new(prefix[..7].to_vec()).unwrap(), 6).unwrap();
            let mut counter = q.counter();
            queries.iter().zip(&truth).all(|((x, kk), enc)| match g_from_process(x, *kk, &q, &mut counter).unwrap() {
                Some(v) => {
                    let tol = ratio(1, *kk);
                    (&v - &enc.lo).to_ratio() < tol && (&enc.hi - &v).to_ratio() < tol
                }
                None => false,
            })
        });
        if !ok {
            g_misses += 1;
        }
    }
    let lambda = b_intersection_measure(&k, 6).unwrap().to_f64();
    let sigma = (lambda * (1.0 - lambda) / ORBITS as f64).sqrt();
    let frac = full as f64 / ORBITS as f64;
    let pass = frac >= lambda - 3.0 * sigma && g_misses == 0 && full > 0;
    outcome(
        pass,
        format!(
            "full K-prefix on {full}/{ORBITS} = {frac:.4} vs λ(∩B) = {lambda:.4} - 3σ = {:.4}; g within 1/k on 20 queries: {} of {full} orbits",
            lambda - 3.0 * sigma,
            full - g_misses
        ),
    )
}

/// Exact `r(h) < 2^-(n+2)` for the two rates, computed without the library.
fn rate_below(rate: &BuiltinRate, h: &BigUint, n: usize) -> bool {
    match rate {
        BuiltinRate::PowTwoNeg => h > &BigUint::from(n + 2),
        BuiltinRate::Reciprocal(c) => h + *c > BigUint::one() << (n + 2),
        BuiltinRate::Zero => true,
    }
}

fn rate_f64(rate: &BuiltinRate, h: u64) -> f64 {
    match rate {
        BuiltinRate::PowTwoNeg => 2f64.powi(-(h.min(2000) as i32)),
        BuiltinRate::Reciprocal(c) => 1.0 / (h + c) as f64,
        BuiltinRate::Zero => 0.0,
    }
}

// 7. Certificates and the empirical rate at h'.
fn slow_rate() -> Outcome {
    const TRIALS: u64 = 4000;
    const STAGES: usize = 6;
    let mut lines = Vec::new();
    let mut pass = true;
    for rate in [BuiltinRate::PowTwoNeg, BuiltinRate::Reciprocal(2)] {
        let ks = choose_k_for_rate(&rate, STAGES + 4).unwrap();
        let p = build_theorem2(&ks, STAGES + 4).unwrap();
        let target = exact_target(&[0], Dyadic::pow2(-1));
        let mut parts = Vec::new();
        for n in 1..=STAGES {
            let cert = slowrate_certificate(&p, n, Some(&rate)).unwrap();
            let hp = h_prime(ks.values()[n], n);
            let cert_ok = cert.pass && cert.h_prime == hp && rate_below(&rate, &hp, n);
            let hp = hp.to_u64().unwrap();
            let mut yes = 0u64;
            for t in 0..TRIALS {
                let out = rate_trial(&p, &[0], 2, &[hp], &target, 7_000 + t, STAGES + 3).unwrap();
                yes += u64::from(out[0] == Deviation::Yes);
            }
            let (lo, _) = wilson(yes, TRIALS, 3.0);
            let r = rate_f64(&rate, hp);
            let ok = cert_ok && lo > r;
            pass &= ok;
            parts.push(format!(
                "n={n} h'={hp} {yes}/{TRIALS} lo={lo:.4} r={}{}",
                rate.describe(&hp.into()),
                if ok { "" } else { " ✗" }
            ));
        }
        lines.push(format!("{} k={:?}: {}", rate.name(), &ks.values()[..=STAGES], parts.join(", ")));
    }
    outcome(pass, lines.join(" | "))
}

// 8. Witnesses against a family of estimators.
fn adversary_family() -> Outcome {
    let mut zero = ConstantEstimator::new(BigRational::zero());
    let mut half = ConstantEstimator::new(ratio(1, 2));
    let mut linear = EmpiricalEstimator::new(GrowthRule { scale: 2, k_power: 1, exponential: false });
    let mut square = EmpiricalEstimator::new(GrowthRule::default());
    let budgets = Budgets { k: 1024, m: 256, steps: 1_000_000 };
    let cfg = AdversaryConfig { stages: 12, budgets, ..AdversaryConfig::default() };
    let run = {
        let mut fs: [&mut dyn Estimator; 4] = [&mut zero, &mut half, &mut linear, &mut square];
        build_adversary(&mut fs, &cfg).unwrap()
    };
    if let Some(a) = &run.abort {
        return outcome(false, format!("aborted at stage {}", a.stage));
    }
    let fs: [&mut dyn Estimator; 4] = [&mut zero, &mut half, &mut linear, &mut square];
    let mut verified = 0;
    let mut tampered_rejected = 0;
    for w in &run.witnesses {
        let est = &mut *fs[w.e as usize - 1];
        if verify_witness(&run.process, &run.trace, w, est).unwrap().pass() {
            verified += 1;
        }
        let mut more = w.clone();
        more.m += 1;
        let mut cheaper = w.clone();
        cheaper.claimed = cheaper.claimed.half();
        if !verify_witness(&run.process, &run.trace, &more, est).unwrap().pass()
            && !verify_witness(&run.process, &run.trace, &cheaper, est).unwrap().pass()
        {
            tampered_rejected += 1;
        }
    }
    // estimators without witnesses must make no claim on any stage's suffixes
    let mut silent_claims = 0;
    let mut silent = Vec::new();
    for e in 1..=4u64 {
        if run.witnesses.iter().any(|w| w.e == e) {
            continue;
        }
        silent.push(e);
        let est = &mut *fs[e as usize - 1];
        for record in &run.trace.stages {
            let label = run.process.label(record.n - 1).unwrap();
            let h = label.len().to_u64().unwrap_or(u64::MAX);
            for i in 1..=8u64.min(h) {
                let code = pairing(e, i).unwrap();
                if 1u64 << (code + 2).min(63) >= budgets.k {
                    break;
                }
                let len = (h - i + 1).min(cfg.suffix_len_cap) as usize;
                let y = if est.uses_input() { label.extract(&BigUint::from(i), len).unwrap() } else { Vec::new() };
                for m in 1..=budgets.m {
                    if fhat_member(est, &FHatQuery { n: code, m, y: &y, budgets }) {
                        silent_claims += 1;
                    }
                }
            }
        }
    }
    let by_e: Vec<String> =
        (1..=4u64).map(|e| format!("{}", run.witnesses.iter().filter(|w| w.e == e).count())).collect();
    let total = run.witnesses.len();
    let pass = total > 0 && verified == total && tampered_rejected == total && silent_claims == 0;
    outcome(
        pass,
        format!(
            "{} stages; witnesses per estimator [{}]; {verified}/{total} verify, {tampered_rejected}/{total} tampered copies rejected; silent {silent:?} with {silent_claims} claims",
            run.trace.stages.len(),
            by_e.join(", ")
        ),
    )
}

fn profile_ok(p: &ProcessHandle) -> Result<String, String> {
    let values: Vec<BigRational> =
        (0..=p.top()).map(|n| BigRational::new(p.k()[n].into(), p.height(n).unwrap().clone().into())).collect();
    for (n, v) in values.iter().enumerate() {
        let kn = p.k()[n];
        let bound = BigRational::new((BigUint::from(kn) << 1u32).into(), (BigUint::one() << kn).into());
        if v <= &BigRational::zero() || v > &bound {
            return Err(format!("stage {n}: {v} outside (0, k 2^(1-k)]"));
        }
        if n > 2 && v >= &values[n - 1] {
            return Err(format!("stage {n}: {v} not below stage {}", n - 1));
        }
    }
    // k_n ≥ n + 1 turns the per-stage bound into (N+1) 2^-N at the last stage
    let top = p.top() as u64;
    let last = values.last().unwrap().to_f64().unwrap();
    if values.last().unwrap() > &ratio(top + 1, 1 << top) {
        return Err(format!("final value {last:.3e} above (N+1) 2^-N"));
    }
    Ok(format!("{:.3e}", last))
}

// 9. k_n / h(C_n) on both constructions.
fn entropy_profiles() -> Outcome {
    let t2 = build_theorem2(&KSequence::gap_i(10), 10).unwrap();
    let mut zero = ConstantEstimator::new(BigRational::zero());
    let cfg =
        AdversaryConfig { stages: 10, budgets: Budgets { k: 64, m: 16, steps: 1 << 16 }, ..AdversaryConfig::default() };
    let adv = build_adversary(&mut [&mut zero], &cfg).unwrap();
    if adv.process.top() != 10 {
        return outcome(false, format!("adversary built {} stages", adv.process.top()));
    }
    match (profile_ok(&t2), profile_ok(&adv.process)) {
        (Ok(a), Ok(b)) => outcome(true, format!("10 stages each; final k_n/h_n {a} (slow-rate), {b} (adversary)")),
        (a, b) => outcome(false, format!("slow-rate: {a:?}; adversary: {b:?}")),
    }
}

// 10. Frozen estimates of p_j on the renewal chain.
fn renewal_estimates() -> Outcome {
    const RUNS: u64 = 1000;
    let spec = RyabkoSpec::new(vec![(1, 2), (1, 3), (1, 4)]).unwrap();
    let tol = ratio(1, 8);
    let mut good = 0;
    let mut undefined = 0;
    for seed in 0..RUNS {
        let x = sample_ryabko(&spec, seed, 40_000, OverflowPolicy::RepeatLast).unwrap();
        let mut all = true;
        for j in 1..=3usize {
            match estimate_pj(&x, j, 8).unwrap() {
                Some(v) => all &= (v - spec.p(j).unwrap()).abs() < tol,
                None => {
                    undefined += 1;
                    all = false;
                }
            }
        }
        good += u64::from(all);
    }
    outcome(
        good * 100 >= 95 * RUNS,
        format!("all of p_1..p_3 within 1/8 on {good}/{RUNS} runs (need 95%); {undefined} estimates not frozen"),
    )
}

type Criterion = (u32, fn() -> Outcome, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, labels, Duration::from_secs(1)),
        (2, bookkeeping, Duration::from_secs(5)),
        (3, run_probabilities, Duration::from_secs(30)),
        (4, grammar_vs_scan, Duration::from_secs(60)),
        (5, doubling_shift, Duration::from_secs(10)),
        (6, g_end_to_end, Duration::from_secs(300)),
        (7, slow_rate, Duration::from_secs(300)),
        (8, adversary_family, Duration::from_secs(600)),
        (9, entropy_profiles, Duration::from_secs(10)),
        (10, renewal_estimates, Duration::from_secs(120)),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = 0;
    for (id, run, budget) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        let elapsed = t.elapsed();
        let pass = o.pass && elapsed <= budget;
        let status = if pass { "PASS" } else { "FAIL" };
        let expected = !KNOWN_UNATTAINABLE.contains(&id);
        let note = if expected { "" } else { " [expected FAIL: stated value is not the exact probability]" };
        println!(
            "criterion {id}: {status} ({:.2}s of {}s) {}{note}",
            elapsed.as_secs_f64(),
            budget.as_secs(),
            o.detail
        );
        if pass != expected {
            unexpected += 1;
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} criterion result(s) differ from expectation");
        ExitCode::FAILURE
    }
}
