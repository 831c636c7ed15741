use crate::tensor::TensorError;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("class weight w[{class}] = {weight} is not positive; lower lambda or inspect the similarity matrix")]
    NonPositiveWeight { class: usize, weight: f64 },

    #[error("training diverged at epoch {epoch}: total loss is {value}")]
    Divergence { epoch: usize, value: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("division by zero: {0}")]
    Division(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
