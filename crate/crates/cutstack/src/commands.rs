//! One function per subcommand; `main` only parses arguments and prints.

use std::path::Path;

use cutstack_core::adversary::{
    build_adversary, entropy_check, rebuild_process, verify_witness, AbortReport, AdversaryConfig, AdversaryTrace,
    FalsificationWitness, Verdict,
};
use cutstack_core::audit::{
    bookkeeping_holds, doubling_shift_sweep, entropy_profile_holds, label_recursion_holds, verify_theorem2, CheckResult,
};
use cutstack_core::bits::{parse_bits, render};
use cutstack_core::dyadic::Dyadic;
use cutstack_core::estimator::{Budgets, Estimator};
use cutstack_core::label::PatternCounter;
use cutstack_core::process::{Enclosure, ProcessError, ProcessHandle, ProcessKind};
use cutstack_core::ryabko::{estimate_pj, freeze_size, sample_ryabko, OverflowPolicy, RyabkoSpec};
use cutstack_core::slowrate::{
    build_theorem2, check_rate, choose_k_for_rate, g_from_table, slowrate_certificate, BuiltinRate, KRecovery,
    KSequence,
};
use cutstack_core::stats::{aggregate, exact_target, rate_trial, CurvePoint};
use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::estimators::{instantiate_all, Instance};
use crate::formats::{
    read_json, AdversaryJson, CertificateJson, DyadicJson, EnclosureJson, EstimatorConfig, ProcessFile, TraceJson,
    WitnessJson,
};
use crate::CliError;

const THEOREM2: &str = "theorem2";
const ADVERSARY: &str = "adversary";

pub struct Loaded {
    pub file: ProcessFile,
    pub process: ProcessHandle,
}

impl Loaded {
    pub fn k_sequence(&self) -> Result<KSequence, CliError> {
        Ok(KSequence::new(self.process.k().to_vec())?)
    }

    fn counter_for(&self, len: usize) -> PatternCounter {
        PatternCounter::new(len.max(self.process.pattern_cap()))
    }
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let file: ProcessFile = read_json(path)?;
    load_file(&file, path.parent().unwrap_or(Path::new(".")))
}

/// Rebuilds the columns a process file describes.
pub fn load_file(file: &ProcessFile, _base: &Path) -> Result<Loaded, CliError> {
    let process = match file.kind.as_str() {
        THEOREM2 => {
            let k = KSequence::new(file.k.clone())?;
            build_theorem2(&k, file.stages)?
        }
        ADVERSARY => {
            let adv = file.adversary.as_ref().ok_or_else(|| CliError::Usage("adversary file without trace".into()))?;
            let p = rebuild_process(&AdversaryTrace::from(&adv.trace))?;
            if p.k() != file.k.as_slice() || p.top() != file.stages {
                return Err(CliError::Verification("k sequence differs from the trace".into()));
            }
            p
        }
        other => return Err(CliError::Usage(format!("unknown process kind {other:?}"))),
    };
    let process = match file.pattern_cap {
        Some(cap) => process.with_pattern_cap(cap),
        None => process,
    };
    Ok(Loaded { file: file.clone(), process })
}

pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| CliError::Usage(format!("bad {what} entry {t:?}"))))
        .collect()
}

fn parse_x(x: &str) -> Result<Vec<u8>, CliError> {
    parse_bits(x).map_err(|e| CliError::Usage(e.to_string()))
}

fn parse_dyadic(s: &str) -> Result<Dyadic, CliError> {
    s.parse().map_err(|e| CliError::Usage(format!("{s:?}: {e}")))
}

pub fn build_theorem2_file(
    k: Option<&str>,
    rate: Option<&str>,
    stages: Option<usize>,
    pattern_cap: Option<usize>,
) -> Result<ProcessFile, CliError> {
    let rate = rate.map(|r| r.parse::<BuiltinRate>()).transpose()?;
    if let Some(r) = &rate {
        check_rate(r)?;
    }
    let ks = match (k, &rate) {
        (Some(k), _) => {
            let ks = KSequence::new(parse_list(k, "k")?)?;
            if stages.is_some_and(|s| s > ks.top()) {
                return Err(CliError::Usage(format!(
                    "--stages exceeds the {} stages the k sequence defines",
                    ks.top()
                )));
            }
            ks
        }
        (None, Some(r)) => {
            let stages = stages.ok_or_else(|| CliError::Usage("--rate needs --stages".into()))?;
            choose_k_for_rate(r, stages)?
        }
        (None, None) => return Err(CliError::Usage("one of --k or --rate is required".into())),
    };
    let stages = stages.unwrap_or(ks.top());
    let p = build_theorem2(&ks, stages)?;
    let certificates = match &rate {
        Some(r) => (1..=stages)
            .map(|n| slowrate_certificate(&p, n, Some(r)).map(|c| CertificateJson::from(&c)))
            .collect::<Result<Vec<_>, _>>()?,
        None => Vec::new(),
    };
    Ok(ProcessFile {
        kind: THEOREM2.into(),
        k: ks.values()[..=stages].to_vec(),
        stages,
        pattern_cap,
        rate: rate.map(|r| cutstack_core::slowrate::Rate::name(&r)),
        certificates,
        adversary: None,
    })
}

pub struct AdversaryBuild {
    pub file: ProcessFile,
    pub table: String,
    pub abort: Option<AbortReport>,
}

pub fn build_adversary_file(config_path: &Path, stages: usize, budgets: Budgets) -> Result<AdversaryBuild, CliError> {
    let config: EstimatorConfig = read_json(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let defaults = AdversaryConfig::default();
    let cfg = AdversaryConfig {
        stages,
        budgets,
        suffix_cap: config.suffix_cap.unwrap_or(defaults.suffix_cap),
        suffix_len_cap: config.suffix_len_cap.unwrap_or(defaults.suffix_len_cap),
        max_k: config.max_k.unwrap_or(defaults.max_k),
    };
    let (mut instances, resolved) = instantiate_all(&config.estimators, base)?;
    let run = {
        let mut refs: Vec<&mut dyn Estimator> = instances.iter_mut().map(|i| i as &mut dyn Estimator).collect();
        build_adversary(&mut refs, &cfg)?
    };
    check_failures(&mut instances)?;
    let verdicts = run.verdicts();
    let mut table = String::from("estimator\ttag\tverdict\n");
    for (idx, (tag, v)) in run.trace.tags.iter().zip(&verdicts).enumerate() {
        let v = match v {
            Verdict::Witnessed(c) => format!("defeated ({c} witness{})", if *c == 1 { "" } else { "es" }),
            Verdict::Silence => "defeated by silence (no f-hat claim under budget)".into(),
        };
        table.push_str(&format!("{}\t{}\t{}\n", idx + 1, tag, v));
    }
    let file = ProcessFile {
        kind: ADVERSARY.into(),
        k: run.process.k().to_vec(),
        stages: run.process.top(),
        pattern_cap: None,
        rate: None,
        certificates: Vec::new(),
        adversary: Some(AdversaryJson {
            estimators: resolved,
            trace: TraceJson::from(&run.trace),
            witnesses: run.witnesses.iter().map(WitnessJson::from).collect(),
            abort: run.abort.as_ref().map(Into::into),
        }),
    };
    Ok(AdversaryBuild { file, table, abort: run.abort })
}

fn check_failures(instances: &mut [Instance]) -> Result<(), CliError> {
    for i in instances {
        if let Some(e) = i.take_failure() {
            return Err(CliError::Usage(e.to_string()));
        }
    }
    Ok(())
}

fn default_stage(p: &ProcessHandle) -> usize {
    p.top().saturating_sub(1)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| CliError::Usage(e.to_string()))
}

/// Orbits from `count` consecutive seeds, started uniformly on `S(C_stage)`.
pub fn sample_lines(
    l: &Loaded,
    seed: u64,
    len: u64,
    count: u64,
    stage: Option<usize>,
    jobs: usize,
) -> Result<Vec<String>, CliError> {
    let m = stage.unwrap_or_else(|| default_stage(&l.process));
    pool(jobs)?.install(|| {
        (0..count)
            .into_par_iter()
            .map(|t| Ok(render(&l.process.sample_orbit_from(seed.wrapping_add(t), len, m)?.bits)))
            .collect()
    })
}

pub fn prob(l: &Loaded, x: &str, eps: Option<&str>) -> Result<EnclosureJson, CliError> {
    let x = parse_x(x)?;
    let mut counter = l.counter_for(x.len());
    let p = &l.process;
    let enc = match (p.kind(), eps) {
        (ProcessKind::Theorem2, Some(eps)) => p.block_prob_limit_with(&mut counter, &x, &parse_dyadic(eps)?)?,
        (_, eps) => {
            let enc = p.stage_enclosure(&mut counter, p.top(), &x)?;
            if let Some(eps) = eps {
                let eps = parse_dyadic(eps)?;
                if enc.width() > eps {
                    return Err(CliError::Budget(format!("best enclosure width {} exceeds {eps}", enc.width())));
                }
            }
            enc
        }
    };
    Ok(EnclosureJson::from(&enc))
}

#[derive(Debug, Serialize)]
pub struct EstimateReport {
    pub x: String,
    pub k: u64,
    pub value: Option<DyadicJson>,
    pub k_table: Vec<(usize, u64)>,
    pub consumed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Streams an orbit into the K-table recovery until `g(x, k)` is defined or `len` symbols are used.
pub fn estimate(
    l: &Loaded,
    x: &str,
    k: u64,
    seed: u64,
    len: Option<u64>,
    stage: Option<usize>,
) -> Result<EstimateReport, CliError> {
    if l.process.kind() != ProcessKind::Theorem2 {
        return Err(CliError::Usage("estimate runs on theorem2 processes".into()));
    }
    let xb = parse_x(x)?;
    let p = &l.process;
    let m = stage.unwrap_or_else(|| default_stage(p));
    let start = p.sample_start(seed, m)?;
    let len = match len {
        Some(len) => len,
        None => {
            let (level, _) =
                p.locate(&start, p.top())?.ok_or_else(|| CliError::Budget("start point off the top stage".into()))?;
            (p.height(p.top())? - level + 1u32).to_u64().unwrap_or(u64::MAX).min(1 << 24)
        }
    };
    let mut rec = KRecovery::new();
    let mut value = None;
    let mut error = None;
    let mut known = 0;
    p.emit_with(&start, len, 1 << 14, |chunk| {
        if let Err(e) = rec.feed(chunk) {
            error = Some(e.to_string());
            return std::ops::ControlFlow::Break(());
        }
        if rec.table().len() > known {
            known = rec.table().len();
            match g_from_table(&xb, k, rec.table()) {
                Ok(Some(v)) => {
                    value = Some(v);
                    return std::ops::ControlFlow::Break(());
                }
                Ok(None) => {}
                Err(e) => {
                    error = Some(e.to_string());
                    return std::ops::ControlFlow::Break(());
                }
            }
        }
        std::ops::ControlFlow::Continue(())
    })?;
    Ok(EstimateReport {
        x: x.into(),
        k,
        value: value.as_ref().map(DyadicJson::from),
        k_table: rec.table().pairs().collect(),
        consumed: rec.consumed(),
        error,
    })
}

fn line(c: &CheckResult) -> String {
    let status = if c.pass { "PASS" } else { "FAIL" };
    if c.detail.is_empty() {
        format!("{status} {}", c.name)
    } else {
        format!("{status} {} ({})", c.name, c.detail)
    }
}

pub struct VerifyReport {
    pub lines: Vec<String>,
    pub pass: bool,
}

pub fn verify(l: &Loaded, witness: Option<&Path>, rerun: bool, seed: u64) -> Result<VerifyReport, CliError> {
    let p = &l.process;
    let mut checks = Vec::new();
    let mut lines = Vec::new();
    for n in 0..=p.top() {
        if p.height_u64(n).is_some_and(|h| h <= 64) {
            let label = render(&p.label(n)?.materialize(64).map_err(ProcessError::from)?);
            let ok = if n == 0 { label == "1" } else { label_recursion_holds(p, n, 0, seed)? };
            lines.push(format!("s(C_{n})={label} check {}", if ok { "PASS" } else { "FAIL" }));
            checks.push(CheckResult { name: format!("s(C_{n})"), pass: ok, detail: String::new() });
        }
    }
    match p.kind() {
        ProcessKind::Theorem2 => {
            let k = l.k_sequence()?;
            checks.extend(verify_theorem2(p, &k, seed)?);
            if let Some(rate) = &l.file.rate {
                let r: BuiltinRate = rate.parse()?;
                for n in 1..=p.top() {
                    let c = slowrate_certificate(p, n, Some(&r))?;
                    let stored = l.file.certificates.iter().find(|s| s.n == n);
                    let same = stored.is_none_or(|s| *s == CertificateJson::from(&c));
                    checks.push(CheckResult {
                        name: format!("certificate n={n}"),
                        pass: c.pass && same,
                        detail: format!(
                            "h' = {}, 2^-(n+2) = {} vs r(h') = {}",
                            c.h_prime, c.lower_bound, c.r_of_h_prime
                        ),
                    });
                }
            }
        }
        ProcessKind::Adversary => checks.extend(verify_adversary(l, witness, rerun, seed)?),
    }
    let pass = checks.iter().all(|c| c.pass);
    lines.extend(checks.iter().map(line));
    Ok(VerifyReport { lines, pass })
}

fn verify_adversary(l: &Loaded, witness: Option<&Path>, rerun: bool, seed: u64) -> Result<Vec<CheckResult>, CliError> {
    let p = &l.process;
    let adv = l.file.adversary.as_ref().expect("loaded adversary files carry a trace");
    let trace = AdversaryTrace::from(&adv.trace);
    let mut out = Vec::new();
    let mut support = Dyadic::pow2(-1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for record in &trace.stages {
        for &c in &record.g {
            support = &support + &Dyadic::pow2(-(c as i64 + 1));
        }
        let n = record.n;
        out.push(CheckResult {
            name: format!("bookkeeping C_{n}"),
            pass: bookkeeping_holds(p, n, &support)?,
            detail: format!("k_{n} = {}, support {support}", record.k),
        });
        out.push(CheckResult {
            name: format!("label recursion C_{n}"),
            pass: label_recursion_holds(p, n, 64, rng.random())?,
            detail: String::new(),
        });
    }
    out.extend(doubling_shift_sweep(p, 20, &mut rng)?);
    out.push(CheckResult { name: "entropy profile".into(), pass: entropy_profile_holds(p)?, detail: String::new() });
    let windows = entropy_check(p, 32, rng.random())?;
    let bad: Vec<usize> = windows.iter().filter(|s| !s.pass()).map(|s| s.n).collect();
    out.push(CheckResult {
        name: "stage block lower bounds".into(),
        pass: bad.is_empty(),
        detail: if bad.is_empty() { String::new() } else { format!("failing stages {bad:?}") },
    });

    let witnesses: Vec<WitnessJson> = match witness {
        Some(path) => match read_json::<serde_json::Value>(path)? {
            serde_json::Value::Array(_) => read_json(path)?,
            _ => vec![read_json(path)?],
        },
        None => adv.witnesses.clone(),
    };
    let (mut instances, _) = instantiate_all(&adv.estimators, Path::new("."))?;
    for wj in &witnesses {
        let w = FalsificationWitness::try_from(wj)?;
        let est = instances.get_mut(w.e as usize - 1).ok_or_else(|| {
            CliError::Verification(format!("witness names estimator {} of {}", w.e, adv.estimators.len()))
        })?;
        let check = verify_witness(p, &trace, &w, est)?;
        out.push(CheckResult {
            name: format!("witness e={} code={} m={} stage={}", w.e, w.code, w.m, w.stage),
            pass: check.pass(),
            detail: format!(
                "zero run {}, half measure {}, block prob {}, f-hat {}",
                check.zero_run, check.half_measure, check.block_prob, check.fhat
            ),
        });
    }
    check_failures(&mut instances)?;
    if rerun {
        let (mut fresh, _) = instantiate_all(&adv.estimators, Path::new("."))?;
        let mut refs: Vec<&mut dyn Estimator> = fresh.iter_mut().map(|i| i as &mut dyn Estimator).collect();
        let run = build_adversary(&mut refs, &trace.config)?;
        let same = TraceJson::from(&run.trace) == adv.trace
            && run.witnesses.iter().map(WitnessJson::from).collect::<Vec<_>>() == adv.witnesses;
        out.push(CheckResult { name: "trace reproduces".into(), pass: same, detail: String::new() });
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct RyabkoEstimate {
    pub j: usize,
    pub k: u64,
    pub needed: u64,
    pub estimate: Option<String>,
    pub p_j: Option<String>,
}

pub fn parse_ryabko_spec(p: &str) -> Result<RyabkoSpec, CliError> {
    let mut fracs = Vec::new();
    for t in p.split(',').map(str::trim) {
        let (a, b) = t.split_once('/').unwrap_or((t, "1"));
        match (a.parse::<u64>(), b.parse::<u64>()) {
            (Ok(a), Ok(b)) => fracs.push((a, b)),
            _ => return Err(CliError::Usage(format!("probability {t:?} is not a fraction of non-negative integers"))),
        }
    }
    RyabkoSpec::new(fracs).map_err(|e| CliError::Usage(e.to_string()))
}

/// `j=2,k=8`
pub fn parse_jk(s: &str) -> Result<(usize, u64), CliError> {
    let (mut j, mut k) = (None, None);
    for part in s.split(',').map(str::trim) {
        match part.split_once('=') {
            Some(("j", v)) => j = v.parse().ok(),
            Some(("k", v)) => k = v.parse().ok(),
            _ => return Err(CliError::Usage(format!("bad --estimate entry {part:?}; expected j=…,k=…"))),
        }
    }
    match (j, k) {
        (Some(j), Some(k)) if j >= 1 && k >= 1 => Ok((j, k)),
        _ => Err(CliError::Usage("--estimate needs j ≥ 1 and k ≥ 1".into())),
    }
}

pub enum RyabkoOutput {
    Symbols(String),
    Estimate(RyabkoEstimate),
}

pub fn ryabko(
    p: &str,
    seed: u64,
    len: usize,
    estimate: Option<&str>,
    policy: OverflowPolicy,
) -> Result<RyabkoOutput, CliError> {
    let spec = parse_ryabko_spec(p)?;
    let x = sample_ryabko(&spec, seed, len, policy).map_err(|e| CliError::Budget(e.to_string()))?;
    let Some(est) = estimate else {
        let text: String = x.iter().map(|&s| char::from(b'0' + s)).collect();
        return Ok(RyabkoOutput::Symbols(text));
    };
    let (j, k) = parse_jk(est)?;
    let value = estimate_pj(&x, j, k).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(RyabkoOutput::Estimate(RyabkoEstimate {
        j,
        k,
        needed: freeze_size(k),
        estimate: value.map(|v| v.to_string()),
        p_j: spec.p(j).map(|v| v.to_string()),
    }))
}

pub struct Curve {
    pub points: Vec<CurvePoint>,
    pub target: Enclosure,
}

/// The enclosure trials are judged against: exact `1/2` for single symbols
/// on a full-support process (the coding is by halves of a measure-preserving
/// map), otherwise the finest stage enclosure, or the first within `eps`.
pub fn rate_target(l: &Loaded, x: &[u8], eps: Option<&str>) -> Result<Enclosure, CliError> {
    let p = &l.process;
    if x.len() == 1 && p.kind() == ProcessKind::Theorem2 {
        return Ok(exact_target(x, Dyadic::pow2(-1)));
    }
    let mut counter = l.counter_for(x.len());
    Ok(match eps {
        Some(eps) if p.kind() == ProcessKind::Theorem2 => {
            p.block_prob_limit_with(&mut counter, x, &parse_dyadic(eps)?)?
        }
        _ => p.stage_enclosure(&mut counter, p.top(), x)?,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn rate_curve(
    l: &Loaded,
    x: &str,
    k: u64,
    lengths: &[u64],
    trials: u64,
    seed: u64,
    stage: Option<usize>,
    eps: Option<&str>,
    jobs: usize,
) -> Result<Curve, CliError> {
    if k == 0 {
        return Err(CliError::Usage("k must be positive".into()));
    }
    let xb = parse_x(x)?;
    let target = rate_target(l, &xb, eps)?;
    let m = stage.unwrap_or_else(|| default_stage(&l.process));
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let outcomes = pool(jobs)?.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|t| rate_trial(&l.process, &xb, k, &sorted, &target, seed.wrapping_add(t), m))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(Curve { points: aggregate(&sorted, &outcomes), target })
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("length,deviation_fraction,ci_lo,ci_hi\n");
    for p in points {
        out.push_str(&format!("{},{},{},{}\n", p.length, p.fraction, p.ci_lo, p.ci_hi));
    }
    out
}

/// `h'` values of a process: the lengths at which its certificates apply.
pub fn h_primes(p: &ProcessHandle) -> Vec<BigUint> {
    (1..=p.top()).map(|n| cutstack_core::slowrate::h_prime(p.k()[n], n)).collect()
}

pub fn h_prime_lengths(p: &ProcessHandle) -> Vec<u64> {
    h_primes(p).iter().filter_map(|h| h.to_u64()).collect()
}
