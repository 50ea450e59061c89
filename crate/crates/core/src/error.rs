use thiserror::Error;

use crate::frontend::ConfigError;

/// Failure of the nonlinear DC solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(
        "newton did not converge after {iterations} iterations (last residual {residual:.3e} A)"
    )]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("infeasible bias: {device} {detail}")]
    Infeasible { device: String, detail: String },
    #[error("small-signal precondition violated: {0}")]
    Precondition(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular nodal system at {node}")]
    Singular { node: String },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("sar: {0}")]
    Sar(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code for the CLI: 2 config, 3 solver, 4 I/O, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Invalid(_) | Error::Dimension(_) => 2,
            Error::Solve(_) | Error::Singular { .. } | Error::Sar(_) => 3,
            Error::Io(_) | Error::Csv(_) => 4,
            Error::UnsupportedFormat(_) => 2,
            Error::Context { source, .. } => source.exit_code(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
