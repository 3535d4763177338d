use crate::field::Shape;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0} vs {1}")]
    ShapeMismatch(Shape, Shape),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("odd dimension in {0}; factor-2 resampling needs even height and width")]
    OddDimension(Shape),

    #[error("dimensions of {shape} are not divisible by {divisor}")]
    NotDivisible { shape: Shape, divisor: usize },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed header: {0}")]
    Header(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("operator too large to materialize: {elements} input elements (limit {limit})")]
    SizeGuard { elements: usize, limit: usize },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("training diverged at step {step} (loss {loss})")]
    Divergence { step: usize, loss: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
