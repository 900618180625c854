use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("shape mismatch at {node}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        node: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("tensor data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },

    #[error("invalid operand for {op}: {reason}")]
    InvalidOperand { op: &'static str, reason: String },

    #[error("unsupported op kind `{0}`")]
    UnsupportedOp(String),

    #[error("missing input `{0}`")]
    MissingInput(String),

    #[error("missing parameter `{0}`")]
    MissingParam(String),

    #[error("duplicate name `{0}`")]
    DuplicateName(String),

    #[error("loss node {node} is not scalar (shape {shape:?})")]
    NonScalarLoss { node: usize, shape: Vec<usize> },

    #[error("value vector does not belong to this graph ({got} values for {expected} nodes)")]
    StaleValues { expected: usize, got: usize },

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GraphError>;
