use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SjlError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("s exceeds m (s = {s}, m = {m})")]
    SparsityExceedsDimension { s: usize, m: usize },
    #[error("block flavor requires s to divide m (s = {s}, m = {m})")]
    BlockIndivisible { s: usize, m: usize },
    #[error("vector is zero")]
    ZeroVector,
    #[error("vector has a non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("hard vector needs {needed} coordinates but n = {n}")]
    DimensionTooSmall { needed: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("enumeration needs {needed} configurations, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },
    #[error("{0}")]
    Precondition(String),
    #[error("matrix file: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SjlError>;
