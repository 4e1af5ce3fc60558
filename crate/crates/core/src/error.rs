use thiserror::Error;

/// Errors raised by the discretization, the operators and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("shape mismatch: expected {expected}, got {got} ({what})")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid usage: {0}")]
    Usage(String),

    #[error("model assumption violated: {0}")]
    Assumption(String),

    #[error("degenerate state: component {component} has M-norm² {norm_sq:e}")]
    DegenerateState { component: usize, norm_sq: f64 },

    #[error(
        "metric operator of component {component} is not positive definite; try a smaller omega"
    )]
    MetricFailure { component: usize },

    #[error("linear solver failure: {0}")]
    LinearSolver(String),

    #[error("factorization failure: zero pivot in row {row}")]
    ZeroPivot { row: usize },

    #[error("initialization did not reach residual {target:e} within {steps} steps (last residual {last:e})")]
    Init {
        target: f64,
        steps: usize,
        last: f64,
    },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("oracle refused: {0}")]
    Oracle(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
