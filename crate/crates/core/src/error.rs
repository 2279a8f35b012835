use thiserror::Error;

/// Errors raised by the analysis pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("no principal direction: centroids are degenerate")]
    NoPrincipalDirection,

    #[error("lumen region is not contained in the vessel region ({outside} pixels outside)")]
    LumenOutsideVessel { outside: usize },

    #[error("no slice contains a vessel")]
    NoVessel,

    #[error("non-finite value in {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
