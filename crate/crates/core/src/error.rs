use std::io;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum S2vtError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {context} (expected {expected}, got {actual})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),

    #[error("malformed {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl S2vtError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        S2vtError::InvalidArgument(msg.into())
    }

    pub(crate) fn format(kind: &'static str, reason: impl Into<String>) -> Self {
        S2vtError::Format {
            kind,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad caller input rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            S2vtError::InvalidArgument(_)
                | S2vtError::DimensionMismatch { .. }
                | S2vtError::VocabularyMismatch(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, S2vtError>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(S2vtError::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
