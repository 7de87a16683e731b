use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("image {axis} {extent} is not divisible by factor {factor}")]
    NotDivisible {
        axis: &'static str,
        extent: usize,
        factor: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected_h}x{expected_w}, got {got_h}x{got_w}")]
    DimensionMismatch {
        context: &'static str,
        expected_h: usize,
        expected_w: usize,
        got_h: usize,
        got_w: usize,
    },

    #[error("length mismatch in {context}: expected {expected}, got {got}")]
    LengthMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("matrix is not symmetric (max deviation {max_dev:e})")]
    NotSymmetric { max_dev: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix order {n} exceeds supported maximum {max}")]
    MatrixTooLarge { n: usize, max: usize },

    #[error("linear system is singular or not positive definite")]
    SingularSystem,

    #[error("conjugate gradient diverged: residual {current:e} grew 10x beyond best {best:e}")]
    CgDiverged { best: f64, current: f64 },

    #[error("solver produced NaN during {stage}")]
    SolverNan { stage: &'static str },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed PGM: {0}")]
    PgmFormat(String),

    #[cfg(feature = "png")]
    #[error("PNG decode error: {0}")]
    PngDecode(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;
