use ndgraph::GraphError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("start and destination are not connectable within the horizon (zero joint mass at step {step})")]
    InfeasibleHorizon { step: usize },

    #[error("ground-truth position of step {step} lies outside the grid")]
    OutsideGrid { step: usize },

    #[error("goal is unreachable from the start cell")]
    Unreachable,

    #[error("singular innovation covariance in model {model}")]
    SingularInnovation { model: usize },

    /// `last_finite` is 0 when no epoch finished with a finite loss.
    #[error("training diverged in epoch {epoch} (last finite epoch {last_finite})")]
    Diverged { epoch: usize, last_finite: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
