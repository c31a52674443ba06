use thiserror::Error;

/// Errors raised by the simulation and estimation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("fields are defined on different grids")]
    GridMismatch,

    #[error("domain error at site {site}: {reason}")]
    DomainError { site: usize, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("profile {kind} needs a grid of {expected} sites, got {actual}")]
    SpecGridMismatch {
        kind: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("field has zero supremum")]
    ZeroField,

    #[error("argument must be strictly positive, found {value} at site {site}")]
    NonPositiveArgument { site: usize, value: f64 },

    #[error("values outside the support at sites {sites:?}")]
    OutOfSupport { sites: Vec<usize> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate tail at site {site}: {reason}")]
    DegenerateTail { site: usize, reason: String },

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
