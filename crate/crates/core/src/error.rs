use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad query against a grid or a value field.
    #[error("query error: {0}")]
    Query(String),

    /// A caller broke an operation precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A backward solve produced a non-finite value or an unusable step.
    #[error("solver failure at step {step}, node {node}: {message}")]
    Solver {
        step: usize,
        node: usize,
        message: String,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("policy error: {0}")]
    Policy(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
