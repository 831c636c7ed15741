use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] trixlab::Error),

    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// `3` for numerical failures during training, `2` for everything the
    /// caller can fix by changing inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(trixlab::Error::Divergence { .. } | trixlab::Error::NonPositiveWeight { .. }) => 3,
            _ => 2,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<trixlab::TensorError> for CliError {
    fn from(e: trixlab::TensorError) -> Self {
        CliError::Core(e.into())
    }
}
