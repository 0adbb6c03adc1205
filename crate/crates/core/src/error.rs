use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("degenerate state: {0}")]
    Degenerate(String),
    /// A weighted sample has (numerically) zero model probability.
    #[error("sample {sample:?} is outside the model support (P = {probability:e})")]
    Support { sample: Vec<usize>, probability: f64 },
    #[error("symmetry violation: defect {defect:e} exceeds tolerance {tolerance:e}")]
    SymmetryViolation { defect: f64, tolerance: f64 },
    #[error("infeasible encoding: {0}")]
    InfeasibleEncoding(String),
    #[error("search space of {size} assignments exceeds the oracle budget {budget}; use the SA reference instead")]
    BudgetExceeded { size: f64, budget: u64 },
    #[error("selection strategy {0} left an empty training set")]
    EmptySelection(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
