use thiserror::Error;

/// Errors produced by the clustering library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("duplicate item id `{0}`")]
    DuplicateId(String),

    #[error("unknown item id `{0}`")]
    UnknownId(String),

    #[error("item id `{0}` has no assignment")]
    MissingId(String),

    #[error("operation would leave an empty cluster")]
    EmptyClusterResult,

    #[error("k = {k} is outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("invalid distance matrix: {0}")]
    InvalidDistanceMatrix(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("only {found} significant candidates survived, {needed} clusters requested")]
    InsufficientSurvivors { found: usize, needed: usize },

    #[error("invalid configuration field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that come from the numbers rather than the shape of the input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite(_)
                | Error::QuadratureNonConvergence(_)
                | Error::InsufficientSurvivors { .. }
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
