//! JSON file formats. Dyadics are `{"m": "<integer>", "e": <integer>}`
//! meaning `m / 2^e`.

use std::path::Path;

use cutstack_core::adversary::{
    AbortReport, AdversaryConfig, AdversaryTrace, FEntry, FalsificationWitness, Normalization, StageRecord,
};
use cutstack_core::bits::{parse_bits, render};
use cutstack_core::column::{Column, ColumnExpr};
use cutstack_core::dyadic::{Dyadic, DyadicInterval};
use cutstack_core::estimator::Budgets;
use cutstack_core::process::Enclosure;
use cutstack_core::slowrate::Certificate;
use num_bigint::{BigInt, BigUint};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("invalid value: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> FormatError {
    FormatError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicJson {
    pub m: String,
    pub e: i64,
}

impl From<&Dyadic> for DyadicJson {
    fn from(d: &Dyadic) -> DyadicJson {
        DyadicJson { m: d.mantissa().to_string(), e: d.exponent() as i64 }
    }
}

impl TryFrom<&DyadicJson> for Dyadic {
    type Error = FormatError;

    fn try_from(j: &DyadicJson) -> Result<Dyadic, FormatError> {
        let m: BigInt = j.m.trim().parse().map_err(|_| invalid(format!("dyadic mantissa {:?}", j.m)))?;
        Ok(if j.e >= 0 { Dyadic::new(m, j.e as u64) } else { Dyadic::new(m << j.e.unsigned_abs(), 0) })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalJson {
    pub lo: DyadicJson,
    pub hi: DyadicJson,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoubleJson {
    pub c: Box<ColumnJson>,
    pub n: u64,
}

/// `{"base": {...}} | {"double": {"c": …, "n": …}} | {"stack": […]}`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnJson {
    Base(IntervalJson),
    Double(DoubleJson),
    Stack(Vec<ColumnJson>),
}

impl From<&Column> for ColumnJson {
    fn from(c: &Column) -> ColumnJson {
        match c.expr() {
            ColumnExpr::Base(iv) => ColumnJson::Base(IntervalJson { lo: iv.lower().into(), hi: iv.upper().into() }),
            ColumnExpr::Doubled { column, times } => {
                ColumnJson::Double(DoubleJson { c: Box::new(ColumnJson::from(column)), n: *times })
            }
            ColumnExpr::Stacked(parts) => ColumnJson::Stack(parts.iter().map(ColumnJson::from).collect()),
        }
    }
}

impl TryFrom<&ColumnJson> for Column {
    type Error = FormatError;

    fn try_from(j: &ColumnJson) -> Result<Column, FormatError> {
        match j {
            ColumnJson::Base(iv) => {
                let iv = DyadicInterval::new((&iv.lo).try_into()?, (&iv.hi).try_into()?)
                    .map_err(|e| invalid(e.to_string()))?;
                Column::base(iv).map_err(|e| invalid(e.to_string()))
            }
            ColumnJson::Double(d) => Ok(Column::try_from(d.c.as_ref())?.double(d.n)),
            ColumnJson::Stack(parts) => {
                let parts = parts.iter().map(Column::try_from).collect::<Result<Vec<_>, _>>()?;
                Column::stack_all(parts).map_err(|e| invalid(e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnclosureJson {
    pub x: String,
    pub lo: DyadicJson,
    pub hi: DyadicJson,
    pub stage: usize,
}

impl From<&Enclosure> for EnclosureJson {
    fn from(e: &Enclosure) -> EnclosureJson {
        EnclosureJson { x: render(&e.x), lo: (&e.lo).into(), hi: (&e.hi).into(), stage: e.stage }
    }
}

impl TryFrom<&EnclosureJson> for Enclosure {
    type Error = FormatError;

    fn try_from(j: &EnclosureJson) -> Result<Enclosure, FormatError> {
        Ok(Enclosure {
            x: parse_bits(&j.x).map_err(|e| invalid(e.to_string()))?,
            lo: (&j.lo).try_into()?,
            hi: (&j.hi).try_into()?,
            stage: j.stage,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateJson {
    pub n: usize,
    pub h_prime: String,
    pub lower_bound: DyadicJson,
    pub r_of_h_prime: String,
    pub pass: bool,
}

impl From<&Certificate> for CertificateJson {
    fn from(c: &Certificate) -> CertificateJson {
        CertificateJson {
            n: c.n,
            h_prime: c.h_prime.to_string(),
            lower_bound: (&c.lower_bound).into(),
            r_of_h_prime: c.r_of_h_prime.clone(),
            pass: c.pass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetsJson {
    pub k: u64,
    pub m: u64,
    pub steps: u64,
}

impl From<Budgets> for BudgetsJson {
    fn from(b: Budgets) -> BudgetsJson {
        BudgetsJson { k: b.k, m: b.m, steps: b.steps }
    }
}

impl From<BudgetsJson> for Budgets {
    fn from(b: BudgetsJson) -> Budgets {
        Budgets { k: b.k, m: b.m, steps: b.steps }
    }
}

/// Parses `k=16,m=4096,steps=1e6`; omitted keys keep their defaults.
pub fn parse_budgets(s: &str) -> Result<Budgets, FormatError> {
    let mut b = Budgets::default();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part.split_once('=').ok_or_else(|| invalid(format!("budget entry {part:?}")))?;
        let v = parse_count(value.trim())?;
        match key.trim() {
            "k" => b.k = v,
            "m" => b.m = v,
            "steps" => b.steps = v,
            other => return Err(invalid(format!("unknown budget {other:?}; expected k, m or steps"))),
        }
    }
    Ok(b)
}

/// A non-negative integer, also written as `1e6`.
pub fn parse_count(s: &str) -> Result<u64, FormatError> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| invalid(format!("count {s:?}")))?;
    if f.is_finite() && f >= 0.0 && f.fract() == 0.0 && f <= u64::MAX as f64 {
        Ok(f as u64)
    } else {
        Err(invalid(format!("count {s:?} is not a non-negative integer")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigJson {
    pub stages: usize,
    pub budgets: BudgetsJson,
    pub suffix_cap: u64,
    pub suffix_len_cap: u64,
    pub max_k: u64,
}

impl From<&AdversaryConfig> for ConfigJson {
    fn from(c: &AdversaryConfig) -> ConfigJson {
        ConfigJson {
            stages: c.stages,
            budgets: c.budgets.into(),
            suffix_cap: c.suffix_cap,
            suffix_len_cap: c.suffix_len_cap,
            max_k: c.max_k,
        }
    }
}

impl From<&ConfigJson> for AdversaryConfig {
    fn from(c: &ConfigJson) -> AdversaryConfig {
        AdversaryConfig {
            stages: c.stages,
            budgets: c.budgets.into(),
            suffix_cap: c.suffix_cap,
            suffix_len_cap: c.suffix_len_cap,
            max_k: c.max_k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FEntryJson {
    pub code: u64,
    pub e: u64,
    pub i: u64,
    pub m: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageJson {
    pub n: usize,
    pub k: u64,
    pub f: Vec<FEntryJson>,
    pub g: Vec<u64>,
    pub evaluated: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceJson {
    pub tags: Vec<String>,
    pub config: ConfigJson,
    pub stages: Vec<StageJson>,
}

impl From<&AdversaryTrace> for TraceJson {
    fn from(t: &AdversaryTrace) -> TraceJson {
        TraceJson {
            tags: t.tags.clone(),
            config: (&t.config).into(),
            stages: t
                .stages
                .iter()
                .map(|s| StageJson {
                    n: s.n,
                    k: s.k,
                    f: s.f.iter().map(|f| FEntryJson { code: f.code, e: f.e, i: f.i, m: f.m }).collect(),
                    g: s.g.clone(),
                    evaluated: s.evaluated.clone(),
                })
                .collect(),
        }
    }
}

impl From<&TraceJson> for AdversaryTrace {
    fn from(t: &TraceJson) -> AdversaryTrace {
        AdversaryTrace {
            tags: t.tags.clone(),
            config: (&t.config).into(),
            stages: t
                .stages
                .iter()
                .map(|s| StageRecord {
                    n: s.n,
                    k: s.k,
                    f: s.f.iter().map(|f| FEntry { code: f.code, e: f.e, i: f.i, m: f.m }).collect(),
                    g: s.g.clone(),
                    evaluated: s.evaluated.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessJson {
    pub e: u64,
    pub tag: String,
    pub code: u64,
    pub i: u64,
    pub m: u64,
    pub claimed: DyadicJson,
    pub proven: DyadicJson,
    pub stage: usize,
    pub normalization: String,
}

impl From<&FalsificationWitness> for WitnessJson {
    fn from(w: &FalsificationWitness) -> WitnessJson {
        WitnessJson {
            e: w.e,
            tag: w.tag.clone(),
            code: w.code,
            i: w.i,
            m: w.m,
            claimed: (&w.claimed).into(),
            proven: (&w.proven).into(),
            stage: w.stage,
            normalization: w.normalization.name().into(),
        }
    }
}

impl TryFrom<&WitnessJson> for FalsificationWitness {
    type Error = FormatError;

    fn try_from(w: &WitnessJson) -> Result<FalsificationWitness, FormatError> {
        let normalization = match w.normalization.as_str() {
            "raw" => Normalization::Raw,
            "normalized" => Normalization::Normalized,
            other => return Err(invalid(format!("normalization {other:?}"))),
        };
        Ok(FalsificationWitness {
            e: w.e,
            tag: w.tag.clone(),
            code: w.code,
            i: w.i,
            m: w.m,
            claimed: (&w.claimed).try_into()?,
            proven: (&w.proven).try_into()?,
            stage: w.stage,
            normalization,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortJson {
    pub stage: usize,
    pub estimator: u64,
    pub suffixes: String,
    pub cap: u64,
}

impl From<&AbortReport> for AbortJson {
    fn from(a: &AbortReport) -> AbortJson {
        AbortJson { stage: a.stage, estimator: a.estimator, suffixes: a.suffixes.to_string(), cap: a.cap }
    }
}

impl TryFrom<&AbortJson> for AbortReport {
    type Error = FormatError;

    fn try_from(a: &AbortJson) -> Result<AbortReport, FormatError> {
        let suffixes: BigUint = a.suffixes.parse().map_err(|_| invalid(format!("suffix count {:?}", a.suffixes)))?;
        Ok(AbortReport { stage: a.stage, estimator: a.estimator, suffixes, cap: a.cap })
    }
}

/// Estimators by name and parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EstimatorSpec {
    /// Always `value`, a fraction such as `"0"` or `"1/2"`.
    Constant { value: String },
    /// Frozen frequency after `scale · k^k_power · L(|x|)` symbols, with
    /// `L(l) = 2^l` when `exponential` and `L(l) = l` otherwise.
    Empirical {
        #[serde(default = "one")]
        scale: u64,
        #[serde(default = "two")]
        k_power: u32,
        #[serde(default = "yes")]
        exponential: bool,
    },
    /// Exact answers from a process file (a path, or the file inlined).
    Oracle { process: ProcessSource },
    /// An external program speaking the `EST`/`VAL` line protocol.
    Subprocess { command: Vec<String> },
}

fn one() -> u64 {
    1
}

fn two() -> u32 {
    2
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProcessSource {
    Path(String),
    Inline(Box<ProcessFile>),
}

/// The file given to `build adversary --estimators`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suffix_cap: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suffix_len_cap: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_k: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryJson {
    pub estimators: Vec<EstimatorSpec>,
    pub trace: TraceJson,
    pub witnesses: Vec<WitnessJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort: Option<AbortJson>,
}

/// A process persisted as its construction parameters; columns are rebuilt on load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessFile {
    pub kind: String,
    pub k: Vec<u64>,
    pub stages: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub certificates: Vec<CertificateJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversary: Option<AdversaryJson>,
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FormatError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|source| FormatError::Json { path: path.display().to_string(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let text = to_json(value);
    std::fs::write(path, text + "\n").map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("in-memory values serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use cutstack_core::slowrate::{build_theorem2, KSequence};

    #[test]
    fn dyadic_round_trip() {
        for s in ["0", "1", "-3/8", "5/2^40", "12"] {
            let d: Dyadic = s.parse().unwrap();
            let j = DyadicJson::from(&d);
            assert_eq!(Dyadic::try_from(&j).unwrap(), d);
        }
        let j: DyadicJson = serde_json::from_str(r#"{"m":"3","e":-2}"#).unwrap();
        assert_eq!(Dyadic::try_from(&j).unwrap(), Dyadic::from_integer(12));
        assert_eq!(serde_json::to_string(&DyadicJson::from(&Dyadic::pow2(-3))).unwrap(), r#"{"m":"1","e":3}"#);
    }

    #[test]
    fn column_round_trip() {
        let p = build_theorem2(&KSequence::gap_i(3), 3).unwrap();
        let c = p.stage(3).unwrap();
        let j = ColumnJson::from(c);
        let text = serde_json::to_string(&j).unwrap();
        assert!(text.starts_with(r#"{"stack":[{"double":{"c":"#));
        let back = Column::try_from(&serde_json::from_str::<ColumnJson>(&text).unwrap()).unwrap();
        assert_eq!(back.levels(1 << 12).unwrap(), c.levels(1 << 12).unwrap());
    }

    #[test]
    fn budgets() {
        assert_eq!(parse_budgets("k=16,m=4096,steps=1e6").unwrap(), Budgets { k: 16, m: 4096, steps: 1_000_000 });
        assert_eq!(parse_budgets("k=3").unwrap().m, Budgets::default().m);
        assert!(parse_budgets("q=1").is_err());
        assert!(parse_budgets("k=1.5").is_err());
    }

    #[test]
    fn estimator_config() {
        let text = r#"{"estimators":[{"kind":"constant","value":"0"},{"kind":"empirical","k_power":1,"exponential":false},
            {"kind":"subprocess","command":["python3","est.py"]},{"kind":"oracle","process":"p.json"}]}"#;
        let c: EstimatorConfig = serde_json::from_str(text).unwrap();
        assert_eq!(c.estimators[1], EstimatorSpec::Empirical { scale: 1, k_power: 1, exponential: false });
        assert_eq!(c.estimators[3], EstimatorSpec::Oracle { process: ProcessSource::Path("p.json".into()) });
    }
}
