//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("topology: {0}")]
    Topology(String),

    #[error("weight rule not applicable: {0}")]
    RuleInapplicable(String),

    #[error("mixing matrix invariant violated: {0}")]
    InvariantViolation(String),

    #[error("power iteration did not converge after {steps} steps (last estimate {estimate})")]
    PowerIterationStalled { steps: usize, estimate: f64 },

    #[error("divergence at iteration {iter} (agent {agent}): {detail}")]
    Divergence {
        iter: usize,
        agent: usize,
        detail: String,
    },

    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("dataset: {0}")]
    Data(String),

    #[error("solver did not converge: residual {residual:.3e} after {iters} iterations")]
    SolverStalled { iters: usize, residual: f64 },

    #[error("degenerate rate fit: {0}")]
    DegenerateFit(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
