//! File formats, external estimators and the command implementations behind
//! the `cutstack` binary.

pub mod commands;
pub mod estimators;
pub mod formats;
pub mod subprocess;

pub use cutstack_core;

/// Failure classes, each with its own exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("budget exhausted: {0}")]
    Budget(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Budget(_) => 3,
        }
    }
}

impl From<formats::FormatError> for CliError {
    fn from(e: formats::FormatError) -> CliError {
        CliError::Usage(e.to_string())
    }
}

impl From<subprocess::SubprocessError> for CliError {
    fn from(e: subprocess::SubprocessError) -> CliError {
        CliError::Usage(e.to_string())
    }
}

impl From<cutstack_core::process::ProcessError> for CliError {
    fn from(e: cutstack_core::process::ProcessError) -> CliError {
        use cutstack_core::process::ProcessError as P;
        match e {
            P::InsufficientStages { .. } | P::StageBudgetExhausted { .. } => CliError::Budget(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<cutstack_core::slowrate::SlowRateError> for CliError {
    fn from(e: cutstack_core::slowrate::SlowRateError) -> CliError {
        use cutstack_core::slowrate::SlowRateError as S;
        match e {
            S::Process(p) => p.into(),
            S::RateTooSlow { .. } => CliError::Budget(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<cutstack_core::adversary::AdversaryError> for CliError {
    fn from(e: cutstack_core::adversary::AdversaryError) -> CliError {
        use cutstack_core::adversary::AdversaryError as A;
        match e {
            A::Process(p) => p.into(),
            A::KTooLarge { .. } => CliError::Budget(e.to_string()),
            A::TraceMismatch(_) => CliError::Verification(e.to_string()),
            A::NoEstimators => CliError::Usage(e.to_string()),
        }
    }
}

impl From<cutstack_core::stats::StatsError> for CliError {
    fn from(e: cutstack_core::stats::StatsError) -> CliError {
        match e {
            cutstack_core::stats::StatsError::Process(p) => p.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}
