use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is singular within tolerance (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("singular Jacobian at sample {index} (smallest singular value {smallest:.3e})")]
    SingularJacobian { index: usize, smallest: f64 },

    #[error("Jacobi iteration did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("non-finite value produced in layer {layer}")]
    Overflow { layer: usize },

    #[error("{0}")]
    Divergence(Box<DivergenceReport>),

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("unsupported checkpoint version `{0}`")]
    UnsupportedVersion(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, message: msg.into() }
    }

    /// Attaches the index of the sample that caused the error.
    pub fn at_sample(self, index: usize) -> Self {
        match self {
            Error::SingularJacobian { smallest, .. } => Error::SingularJacobian { index, smallest },
            e @ Error::Sample { .. } => e,
            other => Error::Sample { index, source: Box::new(other) },
        }
    }

    /// True for failures caused by the numbers themselves (divergence,
    /// singularity, overflow) rather than by bad input or I/O.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Singular { .. }
            | Error::SingularJacobian { .. }
            | Error::NoConvergence { .. }
            | Error::Overflow { .. }
            | Error::Divergence(_) => true,
            Error::Sample { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

/// What tripped the divergence monitor.
#[derive(Debug, Clone, PartialEq)]
pub enum DivergenceStatistic {
    SingularValueAbove { value: f64, bound: f64 },
    SingularValueBelow { value: f64, bound: f64 },
    NonFiniteLoss { value: f64 },
    Numeric { message: String },
}

impl fmt::Display for DivergenceStatistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DivergenceStatistic::SingularValueAbove { value, bound } => {
                write!(f, "Jacobian singular value {value:.6e} above bound {bound:.6e}")
            }
            DivergenceStatistic::SingularValueBelow { value, bound } => {
                write!(f, "Jacobian singular value {value:.6e} below bound {bound:.6e}")
            }
            DivergenceStatistic::NonFiniteLoss { value } => write!(f, "non-finite loss {value}"),
            DivergenceStatistic::Numeric { message } => write!(f, "{message}"),
        }
    }
}

/// Emitted when training is aborted by the divergence monitor.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    /// Zero-based epoch in which divergence was detected.
    pub epoch: usize,
    /// Zero-based batch index within that epoch.
    pub batch: usize,
    pub statistic: DivergenceStatistic,
    /// Largest monitored singular value seen over the run, including the
    /// offending one.
    pub max_singular_value: f64,
}

impl fmt::Display for DivergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "divergence at epoch {} batch {}: {} (max singular value seen {:.6e})",
            self.epoch, self.batch, self.statistic, self.max_singular_value
        )
    }
}
