use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("iterates diverged at t = {t} (|coordinate| = {magnitude:e})")]
    Divergence { t: usize, magnitude: f64 },

    #[error("power iteration did not converge after {0} iterations")]
    NotConverged(usize),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("the quantile bound only applies to problems with an unconstrained dual")]
    ConstrainedDual,

    #[error("output selection needs full-iterate retention; re-run with `Retention::Full`")]
    RetentionRequired,

    #[error("bound input `{field}` = {bound} does not match the ensemble value {ensemble}")]
    Mismatch {
        field: &'static str,
        bound: f64,
        ensemble: f64,
    },

    #[error("generator violates concentration precondition: {0}")]
    Precondition(String),

    #[error("every grid cell diverged")]
    AllCellsDiverged,

    #[error("empty sample set")]
    EmptySamples,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
