use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("Z is not rank-consistent with the data at row {row}, column {col}")]
    RankViolation { row: usize, col: usize },
    #[error("invalid truncation interval: lo {lo} > hi {hi}")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("degenerate variance in column {0}")]
    DegenerateVariance(usize),
    #[error("non-finite value at iteration {iteration} in {block}")]
    NonFinite { iteration: usize, block: String },
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = core::result::Result<T, Error>;
