use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] gridplan::Error),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 3 for numeric divergence, 2 for everything else.
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Core(gridplan::Error::Diverged { .. }) => ExitCode::from(3),
            _ => ExitCode::from(2),
        }
    }
}
