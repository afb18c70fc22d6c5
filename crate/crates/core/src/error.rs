use thiserror::Error;

/// Errors raised by the coreset pipelines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoresetError {
    /// Input data that no operation may consume (non-finite entries, bad weights).
    #[error("rejected input: {0}")]
    InvalidInput(String),

    /// A parameter outside its documented range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The matrix has full column rank, so no nonzero null vector exists.
    #[error("no null space: {rows}x{cols} matrix has rank {rank}")]
    NoNullSpace {
        rows: usize,
        cols: usize,
        rank: usize,
    },

    #[error("rank deficient: need rank {needed}, found {found}")]
    DeficientRank { needed: usize, found: usize },

    /// Kernel rows would exceed the per-row entry limit.
    #[error("kernel row length {entries} exceeds the limit of {limit} entries")]
    SizeLimit { entries: u128, limit: u128 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A latent component could not be un-whitened.
    #[error("cannot recover component {component}: eigenvalue {eigenvalue} is not positive")]
    Recovery { component: usize, eigenvalue: f64 },
}

impl CoresetError {
    /// True for errors caused by the caller's data or arguments rather than
    /// by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            CoresetError::InvalidInput(_)
                | CoresetError::InvalidArgument(_)
                | CoresetError::DimensionMismatch { .. }
                | CoresetError::SizeLimit { .. }
        )
    }
}

pub type Result<T, E = CoresetError> = std::result::Result<T, E>;
