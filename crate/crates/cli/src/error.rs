use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config file {0} does not exist")]
    MissingFile(PathBuf),
    #[error("{path}:{line}:{column}: malformed config: {message}")]
    Syntax { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{path}: unknown key `{key}`{location}")]
    UnknownKey { path: PathBuf, key: String, location: String },
    #[error("{path}: bad value{location}: {message}")]
    Schema { path: PathBuf, location: String, message: String },
    #[error("invalid config: {field}: {message}")]
    Invariant { field: String, message: String },
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("missing inputs: {}", .0.join(", "))]
    MissingInputs(Vec<String>),
    #[error("{context}: {source}")]
    Core { context: String, source: iqn::IqnError },
    #[error("{0}")]
    Format(String),
    #[error("{message} (results written so far are kept under {partial})")]
    Partial { message: String, partial: PathBuf },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn invariant(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Invariant { field: field.into(), message: message.into() }
    }

    /// Process exit code per error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingFile(_) | CliError::MissingInputs(_) => 2,
            CliError::Syntax { .. } | CliError::UnknownKey { .. } | CliError::Schema { .. } => 3,
            CliError::Invariant { .. } => 4,
            CliError::Io { .. } | CliError::Partial { .. } => 5,
            CliError::Core { .. } | CliError::Format(_) => 6,
        }
    }
}

pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T> Context<T> for std::result::Result<T, std::io::Error> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|source| CliError::Io { context: what(), source })
    }
}

impl<T> Context<T> for iqn::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|source| CliError::Core { context: what(), source })
    }
}
