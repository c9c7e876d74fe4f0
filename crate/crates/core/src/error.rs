use thiserror::Error;

/// Errors raised anywhere in the core crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("expected a scalar, found shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid map at line {line}: {msg}")]
    Map { line: usize, msg: String },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{0}")]
    Mismatch(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape {
        op,
        detail: detail.into(),
    }
}
