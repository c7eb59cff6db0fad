use thiserror::Error;

/// Errors raised by graph construction, differentiation and checkpoint IO.
#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("target id {id} outside vocabulary of size {vocab}")]
    TargetOutOfRange { id: usize, vocab: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> NnError {
    NnError::ShapeMismatch {
        op,
        detail: detail.into(),
    }
}
