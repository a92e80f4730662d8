use thiserror::Error;

use crate::data::Role;

/// Errors produced by kernel, operator, estimator and scenario routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel specification: {0}")]
    InvalidKernel(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("point set is empty")]
    EmptyPointSet,

    #[error("all points are identical; no positive pairwise distance")]
    DegeneratePoints,

    #[error("unsupported kernel family for {operation}: {family}")]
    UnsupportedFamily { operation: &'static str, family: String },

    #[error("kernel specifications differ: {0}")]
    SpecMismatch(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("sample too small: need at least {needed}, found {found}")]
    SampleTooSmall { needed: usize, found: usize },

    #[error("linear system `{context}` is ill-conditioned: factorization failed after jitter escalation")]
    IllConditioned { context: String },

    #[error("missing role `{0}` in dataset")]
    MissingRole(Role),

    #[error("unsupported adjustment: {0}")]
    UnsupportedAdjustment(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("data error at row {row}, column {column} ({name}): {message}")]
    Data {
        row: usize,
        column: usize,
        name: String,
        message: String,
    },

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
