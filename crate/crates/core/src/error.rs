use thiserror::Error;

/// Errors produced by the solvers, instance model and benchmark harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("histogram must have at least one entry")]
    EmptyHistogram,
    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("weights sum to {sum}, expected 1 within 1e-12")]
    SumNotOne { sum: f64 },
    #[error("all masses are zero")]
    AllZero,
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max deviation {deviation:e})")]
    NotSymmetric { deviation: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("covariance is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("Gibbs kernel underflowed; increase epsilon")]
    NumericalUnderflow,
    #[error("initial coupling does not match the problem marginals (violation {violation:e})")]
    InvalidInit { violation: f64 },
    #[error("loss exponent q = {0} is not supported (only q = 2)")]
    UnsupportedLossExponent(u32),
    #[error("alpha = {0} is outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("features are required on both spaces")]
    MissingFeatures,
    #[error("no assignment satisfies the capacity and demand constraints")]
    Infeasible,
    #[error("node cap {0} reached before any feasible assignment was found")]
    NodeCapExceeded(u64),
    #[error("exact objective must be positive, got {0}")]
    NonPositiveExact(f64),
    #[error("instance generation failed after {attempts} attempts")]
    GenerationFailed { attempts: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0} must not be empty")]
    NonEmptyRequired(&'static str),
    #[error("duplicate grid value {0}")]
    DuplicateGridValue(f64),
    #[error("unknown test id {0:?}")]
    UnknownTestId(String),
    #[error("unknown format {0:?}")]
    UnknownFormat(String),
    #[error("unsupported schema {0:?}")]
    UnsupportedSchema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
