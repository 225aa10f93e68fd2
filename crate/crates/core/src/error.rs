use thiserror::Error;

pub type Result<T, E = IqnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum IqnError {
    /// Caller passed malformed data (dimension mismatch, empty batch, bad index).
    #[error("input error: {0}")]
    Input(String),
    /// Operation invoked in a state where it is not allowed.
    #[error("usage error: {0}")]
    Usage(String),
    /// Inconsistent training or experiment configuration.
    #[error("config error: {0}")]
    Config(String),
    /// Model is ill-posed (non-stochastic rows, divergent oracle, ...).
    #[error("model error: {0}")]
    Model(String),
    /// A mathematical precondition of a diagnostic does not hold for the data.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// Corrupt or unsupported serialized data.
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl IqnError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Self::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }
}
