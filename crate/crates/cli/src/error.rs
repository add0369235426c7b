use serde::Serialize;
use shelab::estimators::EstimatorError;
use shelab::kernel::KernelError;
use shelab::oracle::OracleError;
use shelab::solver::SolverError;
use shelab::ModelError;
use thiserror::Error;

/// Failure of a CLI run, split by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or flags: exit 2.
    #[error("{0}")]
    Config(String),
    /// Failure while computing or writing results: exit 3.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Runtime(_) => "runtime",
        }
    }

    pub fn record(&self, command: &str) -> ErrorRecord {
        ErrorRecord { command: command.to_string(), kind: self.kind(), exit_code: self.exit_code(), message: self.to_string() }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub command: String,
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::InvalidParameter(_) | KernelError::Unsupported(_) | KernelError::Truncation { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Config(_) | SolverError::SizeCap(_) => CliError::Config(e.to_string()),
            SolverError::Kernel(k) => k.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Config(m) => m.into(),
            OracleError::Kernel(k) => k.into(),
            OracleError::NonLinearSigma
            | OracleError::NotSquareIntegrable(_)
            | OracleError::BadTimeGrid(_)
            | OracleError::InvalidParameter(_) => CliError::Config(e.to_string()),
            OracleError::Empty => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::Solver(s) => s.into(),
            EstimatorError::Oracle(o) => o.into(),
            EstimatorError::InvalidParameter(_) | EstimatorError::TooFewReplicates { .. } | EstimatorError::Truncation { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(format!("json: {e}"))
    }
}
