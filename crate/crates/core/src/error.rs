use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed document. Line and column are 1-based.
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("layer {layer}: {message}")]
    InvalidLayer { layer: usize, message: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid hardware config: {0}")]
    InvalidHardware(String),

    /// An operation was handed a layer of the wrong kind.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("rewrite error: {0}")]
    Rewrite(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("missing parameters for layer {0}")]
    MissingParams(usize),

    #[error("invalid tensor file: {0}")]
    TensorFormat(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn layer(layer: usize, message: impl Into<String>) -> Self {
        Error::InvalidLayer {
            layer,
            message: message.into(),
        }
    }
}
