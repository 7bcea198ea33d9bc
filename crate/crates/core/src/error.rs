use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("theta {theta} outside admissible range [0, {theta_max}]")]
    ThetaOutOfRange { theta: f64, theta_max: f64 },

    #[error("invalid base measure: {0}")]
    InvalidBase(String),

    #[error("quadrature did not reach tolerance after {subdivisions} subdivisions (error estimate {error_estimate:e})")]
    QuadratureFailure {
        subdivisions: usize,
        error_estimate: f64,
    },

    #[error("no crossing within {max_steps} steps")]
    BudgetExceeded { max_steps: u64 },

    #[error("{0} requires a standardised family, got a non-standard base")]
    NonStandardFamily(&'static str),

    #[error("need at least {required} samples, have {available}")]
    InsufficientSamples { required: usize, available: usize },

    #[error("renewal sum not converged: last term {last_term:e} exceeds tolerance on running sum {running_sum:e}")]
    TruncationNotConverged { last_term: f64, running_sum: f64 },

    #[error("rate fit needs at least 4 points above the noise floor, got {usable}")]
    InsufficientSignal { usable: usize },

    #[error("empirical law is empty")]
    EmptyLaw,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at line {line}, field `{field}`: {message}")]
    Config {
        line: usize,
        field: String,
        message: String,
    },

    #[error("nothing to write: report has no rows")]
    EmptyReport,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{cell}: {source}")]
    InCell {
        cell: String,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    /// Attaches grid-cell coordinates to an error raised inside that cell.
    pub fn in_cell(self, cell: impl Into<String>) -> Self {
        Error::InCell {
            cell: cell.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with cell context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::InCell { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self.root(), Error::Config { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
