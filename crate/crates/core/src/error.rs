use thiserror::Error;

/// Errors raised by the library.
///
/// Variants are grouped by how a caller should react: invalid input,
/// a size guard or infeasible precondition, and numeric failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: probabilities sum to {sum} (expected 1 within {tol:e})")]
    NotNormalized { what: String, sum: f64, tol: f64 },

    #[error("{what}: negative or non-finite probability {value} at index {index}")]
    InvalidProbability { what: String, index: usize, value: f64 },

    #[error("{what}: expected {expected} entries, found {found}")]
    ShapeMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),

    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("degenerate marginal: {0}")]
    DegenerateMarginal(String),

    #[error("size guard exceeded: {what} needs {requested} evaluations, limit is {limit}")]
    SizeGuard {
        what: String,
        requested: u128,
        limit: u128,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether this error comes from a size guard or an unmet precondition
    /// rather than malformed input.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::SizeGuard { .. } | Error::Precondition(_))
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
