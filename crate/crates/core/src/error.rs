use thiserror::Error;

use crate::grid::GridShape;
use crate::krylov::KrylovError;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch {
        expected: GridShape,
        found: GridShape,
    },

    #[error("field length {len} does not match shape {shape}")]
    LengthMismatch { shape: GridShape, len: usize },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("blur kernel {kernel_rows}x{kernel_cols} does not fit image {shape}")]
    KernelTooLarge {
        kernel_rows: usize,
        kernel_cols: usize,
        shape: GridShape,
    },

    #[error("data vector f = K*z is identically zero; Err scaling is undefined")]
    ZeroData,

    #[error(
        "{solver} Newton iteration {iteration} (outer {outer}): linear solve failed: {source}"
    )]
    NewtonLinearSolve {
        solver: &'static str,
        outer: usize,
        iteration: usize,
        #[source]
        source: KrylovError,
    },

    #[error(
        "{solver} Newton iteration {iteration} (outer {outer}): nested H^-1 solve failed: {source}"
    )]
    NestedSolve {
        solver: &'static str,
        outer: usize,
        iteration: usize,
        #[source]
        source: KrylovError,
    },

    #[error("linear solve failed: {0}")]
    Krylov(#[from] KrylovError),

    #[error("Armijo line search exhausted at outer {outer}, Newton {iteration}: phi(u) = {phi_current:e}, phi(u + eta du) = {phi_trial:e}, eta = {eta:e}")]
    LineSearch {
        outer: usize,
        iteration: usize,
        phi_current: f64,
        phi_trial: f64,
        eta: f64,
    },

    #[error("{solver} did not reach inner tolerance {threshold:e} within {max_iters} Newton steps (outer {outer}, residual {residual:e})")]
    InnerLimit {
        solver: &'static str,
        outer: usize,
        max_iters: usize,
        residual: f64,
        threshold: f64,
    },

    #[error("{method} stopped after {iterations} iterations with Err = {err:e} > {tol:e}")]
    NotConverged {
        method: &'static str,
        iterations: usize,
        err: f64,
        tol: f64,
    },

    #[error("PGM {field}: {reason}")]
    Pgm { field: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag for reports and CLI error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } | Error::LengthMismatch { .. } => "shape",
            Error::NonFinite { .. } => "non_finite",
            Error::InvalidParameter { .. } | Error::KernelTooLarge { .. } => "invalid_parameter",
            Error::ZeroData => "zero_data",
            Error::NewtonLinearSolve { .. } | Error::Krylov(_) => "linear_solve",
            Error::NestedSolve { .. } => "nested_solve",
            Error::LineSearch { .. } => "line_search",
            Error::InnerLimit { .. } => "inner_limit",
            Error::NotConverged { .. } => "not_converged",
            Error::Pgm { .. } => "pgm",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
