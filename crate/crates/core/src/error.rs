use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid length: {0}")]
    InvalidLength(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("complexity budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("LLR role mismatch: expected {expected}, got {found}")]
    RoleMismatch { expected: &'static str, found: &'static str },

    #[error("training diverged (non-finite loss) at step {step}, batch seed {batch_seed:#018x}")]
    TrainingDivergence { step: u64, batch_seed: u64 },

    #[error("inference diverged: non-finite state at iteration {iteration}")]
    InferenceDivergence { iteration: usize },

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
