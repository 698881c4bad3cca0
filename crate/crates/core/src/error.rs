use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("kernel support diameter {diameter} does not fit inside the smallest period {period}")]
    SupportTooLarge { diameter: f64, period: usize },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("Gram matrix is numerically singular (min eigenvalue {min:e}, max {max:e}); generators are not a Riesz basis")]
    NonRiesz { min: f64, max: f64 },

    #[error("linear solve failed: relative residual {residual:e}")]
    SolveFailed { residual: f64 },

    #[error("kernel normalization failed: integral is {integral}")]
    Normalization { integral: f64 },

    #[error("config errors:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
