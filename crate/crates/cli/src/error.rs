use hdg_core::HdgError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(#[from] HdgError),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
    #[error("acceptance threshold violated: {0}")]
    Gate(String),
}

impl CliError {
    /// Process exit status: 1 configuration or output, 2 solver, 3 gate.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Gate(_) => 3,
        }
    }
}
