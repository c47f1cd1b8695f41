//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by spectral algebra, integrators, kernels and constant
/// pipelines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("representation mismatch: expected {expected}, got {got}")]
    RepresentationMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("invalid operator `{label}`: {reason}")]
    InvalidOperator { label: String, reason: String },

    #[error("invalid vector: {0}")]
    InvalidVector(String),

    #[error("mode split n = {n} out of range 1..={dim}")]
    ModeSplitOutOfRange { n: usize, dim: usize },

    #[error("regularity index s = {0} must be < 1")]
    InvalidSobolevIndex(f64),

    #[error("trajectory diverged at step {step}: |q| = {norm:.3e}")]
    Divergence { step: u64, norm: f64 },

    #[error("condition `{name}` failed: lhs = {lhs:.6e} > rhs = {rhs:.6e}")]
    ConditionFailed { name: String, lhs: f64, rhs: f64 },

    #[error("reflection undefined: low-mode difference is zero")]
    ReflectionUndefined,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("unknown potential `{0}`")]
    UnknownPotential(String),

    #[error("step size search failed: {0}")]
    StepSizeSearch(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid_param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
