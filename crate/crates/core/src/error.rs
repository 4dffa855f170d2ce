use thiserror::Error;

use crate::model::FieldTag;

/// Errors raised by the recovery laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("field mismatch: {left} vs {right}")]
    FieldMismatch { left: FieldTag, right: FieldTag },

    #[error("matrix is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid entries: {0}")]
    InvalidEntries(String),

    #[error("invalid variety: {0}")]
    InvalidVariety(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("cannot parse `{text}`: {reason}")]
    Parse { text: String, reason: String },

    #[error("point is off the variety (membership residual {residual:.3e})")]
    OffVariety { residual: f64 },

    #[error("point lies on a singular stratum (sigma_r / sigma_1 = {ratio:.3e})")]
    SingularStratum { ratio: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("sampling failed after {attempts} attempts: {reason}")]
    SamplingFailed { attempts: usize, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("functional witness is zero")]
    ZeroFunctional,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
