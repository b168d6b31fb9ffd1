use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid case: {0}")]
    InvalidCase(String),

    #[error("conflicting voltage setpoints on bus {bus}: {first} vs {second}")]
    ConflictingSetpoint { bus: u32, first: f64, second: f64 },

    #[error("singular Jacobian")]
    SingularJacobian,

    #[error("power flow did not converge after {iterations} iterations (residual {residual:e})")]
    PowerFlowDiverged { iterations: usize, residual: f64 },

    #[error("singular pivot block {block} (rcond {rcond:e})")]
    SingularBlock { block: usize, rcond: f64 },

    #[error("infeasible starting path: {0}")]
    InfeasibleStart(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
