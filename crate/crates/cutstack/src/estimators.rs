//! Turning configuration entries into running estimators.

use std::path::Path;

use cutstack_core::estimator::{
    ConstantEstimator, EmpiricalEstimator, Estimator, Evaluation, GrowthRule, OracleEstimator,
};
use num_rational::BigRational;

use crate::commands::load_file;
use crate::formats::{EstimatorSpec, ProcessSource};
use crate::subprocess::{SubprocessError, SubprocessEstimator};
use crate::CliError;

pub enum Instance {
    Builtin(Box<dyn Estimator + Send>),
    External(SubprocessEstimator),
}

impl Instance {
    pub fn take_failure(&mut self) -> Option<SubprocessError> {
        match self {
            Instance::Builtin(_) => None,
            Instance::External(s) => s.take_failure(),
        }
    }
}

impl Estimator for Instance {
    fn tag(&self) -> String {
        match self {
            Instance::Builtin(e) => e.tag(),
            Instance::External(e) => e.tag(),
        }
    }

    fn evaluate(&mut self, x: &[u8], k: u64, y: &[u8], steps: u64) -> Evaluation {
        match self {
            Instance::Builtin(e) => e.evaluate(x, k, y, steps),
            Instance::External(e) => e.evaluate(x, k, y, steps),
        }
    }

    fn value_floor(&self) -> Option<BigRational> {
        match self {
            Instance::Builtin(e) => e.value_floor(),
            Instance::External(e) => e.value_floor(),
        }
    }

    fn uses_input(&self) -> bool {
        match self {
            Instance::Builtin(e) => e.uses_input(),
            Instance::External(e) => e.uses_input(),
        }
    }
}

pub fn parse_fraction(s: &str) -> Result<BigRational, CliError> {
    let t = s.trim();
    let (p, q) = t.split_once('/').unwrap_or((t, "1"));
    match (p.trim().parse(), q.trim().parse::<num_bigint::BigInt>()) {
        (Ok(p), Ok(q)) if q != 0.into() => Ok(BigRational::new(p, q)),
        _ => Err(CliError::Usage(format!("not a fraction: {s:?}"))),
    }
}

/// Oracle paths are relative to `base`. Returns the spec with oracle
/// processes inlined, so the result no longer depends on other files.
pub fn instantiate(spec: &EstimatorSpec, base: &Path) -> Result<(Instance, EstimatorSpec), CliError> {
    Ok(match spec {
        EstimatorSpec::Constant { value } => {
            let v = parse_fraction(value)?;
            (Instance::Builtin(Box::new(ConstantEstimator::new(v))), spec.clone())
        }
        EstimatorSpec::Empirical { scale, k_power, exponential } => {
            let rule = GrowthRule { scale: *scale, k_power: *k_power, exponential: *exponential };
            (Instance::Builtin(Box::new(EmpiricalEstimator::new(rule))), spec.clone())
        }
        EstimatorSpec::Oracle { process } => {
            let file = match process {
                ProcessSource::Path(p) => crate::formats::read_json(&base.join(p))?,
                ProcessSource::Inline(f) => (**f).clone(),
            };
            let loaded = load_file(&file, base)?;
            let inlined = EstimatorSpec::Oracle { process: ProcessSource::Inline(Box::new(file)) };
            (Instance::Builtin(Box::new(OracleEstimator::new(loaded.process))), inlined)
        }
        EstimatorSpec::Subprocess { command } => {
            (Instance::External(SubprocessEstimator::spawn(command)?), spec.clone())
        }
    })
}

pub fn instantiate_all(specs: &[EstimatorSpec], base: &Path) -> Result<(Vec<Instance>, Vec<EstimatorSpec>), CliError> {
    let mut instances = Vec::with_capacity(specs.len());
    let mut resolved = Vec::with_capacity(specs.len());
    for s in specs {
        let (i, r) = instantiate(s, base)?;
        instances.push(i);
        resolved.push(r);
    }
    Ok((instances, resolved))
}
