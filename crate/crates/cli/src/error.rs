use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] isi_gnn::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    /// Process exit code: 2 for configuration problems, 3 for numerical
    /// divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use isi_gnn::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(
                E::InvalidConfig(_) | E::Unsupported(_) | E::Parse { .. } | E::BudgetExceeded(_) | E::Checkpoint(_),
            ) => 2,
            CliError::Core(E::TrainingDivergence { .. } | E::InferenceDivergence { .. } | E::NonFiniteGradient(_)) => 3,
            _ => 1,
        }
    }
}
