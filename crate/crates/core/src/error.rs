use std::io;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected}, got {got}")]
    InputShape { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infeasible budget: {budget} Diracs cannot represent order {order} in {dim} dimension(s) (need at least {required})")]
    InfeasibleBudget {
        budget: usize,
        order: usize,
        dim: usize,
        required: usize,
    },

    #[error("optimization diverged (non-finite loss) in {stage} at iteration {iteration}")]
    Divergence { stage: String, iteration: usize },

    #[error("all Diracs were pruned; kernel is empty")]
    EmptyKernel,

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("order mismatch: {0}")]
    OrderMismatch(String),

    #[error("incompatible kernel and field: {0}")]
    Incompatible(String),

    #[error("unsupported field backend: {0}")]
    UnsupportedBackend(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported version or magic: {0}")]
    Version(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    /// True for errors caused by the environment (missing files, permissions)
    /// rather than by invalid data or arguments.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
