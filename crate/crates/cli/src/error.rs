use std::path::PathBuf;

use kyle_core::continuous::ContinuousError;
use kyle_core::solver::SolverError;
use kyle_core::verifier::VerifyError;
use kyle_core::{EvalError, SpecError};

/// Process exit status of the `kyle` binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Pass = 0,
    Error = 1,
    Fail = 2,
    Parse = 3,
    Cap = 4,
    Unverifiable = 5,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot parse {field}: {message}")]
    Parse { field: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{context}: {source}")]
    Json { context: String, source: serde_json::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("invalid game: {0}")]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Continuous(#[from] ContinuousError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

impl CliError {
    pub fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Parse { field: field.into(), message: message.into() }
    }

    pub fn exit(&self) -> Exit {
        match self {
            Self::Spec(SpecError::TooLarge { .. })
            | Self::Continuous(ContinuousError::Spec(SpecError::TooLarge { .. }))
            | Self::Solver(SolverError::SupportCapExceeded { .. }) => Exit::Cap,
            Self::Parse { .. } | Self::Usage(_) | Self::Json { .. } | Self::Spec(_) => Exit::Parse,
            Self::Solver(SolverError::BadConfig(_) | SolverError::EpsilonOutOfRange { .. } | SolverError::NotSinglePeriod) => Exit::Parse,
            Self::Continuous(
                ContinuousError::Density(_)
                | ContinuousError::Distribution(_)
                | ContinuousError::TradeBounds { .. }
                | ContinuousError::ZeroLevel
                | ContinuousError::DensityTooFine { .. }
                | ContinuousError::Spec(_),
            ) => Exit::Parse,
            Self::Verify(VerifyError::MissingTrace) => Exit::Unverifiable,
            _ => Exit::Error,
        }
    }
}
