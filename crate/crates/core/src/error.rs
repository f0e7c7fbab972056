use thiserror::Error;

/// Errors raised by tensor algebra, estimators and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("{context}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("mode {mode} out of range for an order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("invalid unfolding: {0}")]
    InvalidUnfolding(String),

    #[error("rank {rank} out of range (must be within 1..={max})")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("singular value decomposition did not converge")]
    SvdNoConvergence,

    #[error("propensity {value} at observed entry {index} is not strictly positive")]
    NonPositivePropensity { index: usize, value: f64 },

    #[error(
        "gradient descent diverged at iteration {iteration}: objective {objective:e} \
         exceeds 10x the initial value {initial:e}"
    )]
    Diverged {
        iteration: usize,
        objective: f64,
        initial: f64,
    },

    #[error("malformed tensor file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
