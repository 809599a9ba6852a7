use thiserror::Error;

/// Errors raised by the numerical routines and the document layer.
#[derive(Debug, Error)]
pub enum CfsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("eigen-solver did not converge on a {0}x{0} matrix")]
    EigenSolver(usize),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("finite-difference step underflow: {0}")]
    StepUnderflow(String),
    #[error("singular operator: {0}")]
    Singular(String),
    #[error("degenerate Gram matrix: {0}")]
    Degenerate(String),
    #[error("malformed word: {0}")]
    Word(String),
    #[error("dimension guard: {0}")]
    TooLarge(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CfsError>;
