use thiserror::Error;

/// Errors produced by the solvers in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is numerically singular (pivot {pivot:e} at column {column})")]
    SingularMatrix { pivot: f64, column: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix has a negative entry {value:e} at ({row}, {col})")]
    NegativeEntries { row: usize, col: usize, value: f64 },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("model is not ergodic: arrival rate {arrival_rate} >= service capacity {service_capacity}")]
    NotErgodic {
        arrival_rate: f64,
        service_capacity: f64,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid blocks: {0}")]
    InvalidBlocks(String),

    #[error("the up-block has no single entrance state")]
    NoExitState,

    #[error("index ({level}, {phase}) out of range")]
    IndexOutOfRange { level: usize, phase: usize },

    #[error("state space of {states} states exceeds the limit of {limit}")]
    CapacityExceeded { states: usize, limit: usize },

    #[error("generator is not transient: {0}")]
    NotTransient(String),
}

pub type Result<T> = std::result::Result<T, Error>;
