use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] spkemb::Error),

    #[error("cannot use config {path}: {reason}")]
    Config { path: PathBuf, reason: String },

    #[error("config describes '{found}' but the command is '{expected}'")]
    CommandMismatch { expected: String, found: String },

    #[error("missing required setting '{0}'; pass the flag or set it in the config")]
    Missing(&'static str),

    #[error("invalid setting: {0}")]
    Invalid(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("cannot walk directory: {0}")]
    Walk(#[from] walkdir::Error),
}

impl CliError {
    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config { .. } | CliError::CommandMismatch { .. } => "config",
            CliError::Missing(_) | CliError::Invalid(_) => "config",
            CliError::Io(_) | CliError::Walk(_) => "io",
        }
    }

    /// `error: kind=<kind> msg=<message>` on one line.
    pub fn one_line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error: kind={} msg={}", self.kind(), msg)
    }
}
