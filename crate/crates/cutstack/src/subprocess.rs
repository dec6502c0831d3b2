//! External estimators over a line protocol.
//!
//! Request `EST <x> <k> <y>\n` with `x`, `y` as 0/1 strings (`y` may be
//! empty); response `VAL p/q\n` or `NOTYET\n`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use cutstack_core::bits::render;
use cutstack_core::estimator::{Estimator, Evaluation};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

#[derive(Debug, thiserror::Error)]
pub enum SubprocessError {
    #[error("empty command")]
    EmptyCommand,
    #[error("cannot start {command}: {source}")]
    Spawn { command: String, source: std::io::Error },
    #[error("{command}: {reason}")]
    Protocol { command: String, reason: String },
}

pub struct SubprocessEstimator {
    command: String,
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    failure: Option<SubprocessError>,
}

impl SubprocessEstimator {
    pub fn spawn(argv: &[String]) -> Result<SubprocessEstimator, SubprocessError> {
        let (program, args) = argv.split_first().ok_or(SubprocessError::EmptyCommand)?;
        let command = argv.join(" ");
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|source| SubprocessError::Spawn { command: command.clone(), source })?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = BufReader::new(child.stdout.take().expect("piped"));
        Ok(SubprocessEstimator { command, child, stdin, stdout, failure: None })
    }

    /// The first protocol failure, if any; evaluations after it return `NotYet`.
    pub fn take_failure(&mut self) -> Option<SubprocessError> {
        self.failure.take()
    }

    fn ask(&mut self, x: &[u8], k: u64, y: &[u8]) -> Result<Evaluation, String> {
        writeln!(self.stdin, "EST {} {} {}", render(x), k, render(y)).map_err(|e| e.to_string())?;
        self.stdin.flush().map_err(|e| e.to_string())?;
        let mut line = String::new();
        if self.stdout.read_line(&mut line).map_err(|e| e.to_string())? == 0 {
            return Err("closed its output".into());
        }
        parse_response(line.trim_end_matches(['\n', '\r']))
    }
}

/// `VAL p/q` or `NOTYET`; `p/q` may also be an integer.
pub fn parse_response(line: &str) -> Result<Evaluation, String> {
    if line == "NOTYET" {
        return Ok(Evaluation::NotYet);
    }
    let Some(v) = line.strip_prefix("VAL ") else {
        return Err(format!("unexpected response {line:?}"));
    };
    let (p, q) = v.split_once('/').unwrap_or((v, "1"));
    let p: BigInt = p.parse().map_err(|_| format!("bad numerator in {line:?}"))?;
    let q: BigInt = q.parse().map_err(|_| format!("bad denominator in {line:?}"))?;
    if q.is_zero() {
        return Err(format!("zero denominator in {line:?}"));
    }
    Ok(Evaluation::Defined(BigRational::new(p, q)))
}

impl Estimator for SubprocessEstimator {
    fn tag(&self) -> String {
        format!("subprocess({})", self.command)
    }

    fn evaluate(&mut self, x: &[u8], k: u64, y: &[u8], _steps: u64) -> Evaluation {
        if self.failure.is_some() {
            return Evaluation::NotYet;
        }
        match self.ask(x, k, y) {
            Ok(v) => v,
            Err(reason) => {
                self.failure = Some(SubprocessError::Protocol { command: self.command.clone(), reason });
                Evaluation::NotYet
            }
        }
    }
}

impl Drop for SubprocessEstimator {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
