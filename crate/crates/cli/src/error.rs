use std::path::Path;

use thiserror::Error;

/// Failures surfaced by the command layer, split by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input data or a failed analysis. Exit status 1.
    #[error("{0}")]
    Validation(String),

    /// Unreadable or unwritable files. Exit status 2.
    #[error("{path}: {message}")]
    Io { path: String, message: String },

    /// Unusable configuration. Exit status 2.
    #[error("config: {0}")]
    Config(String),
}

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io { .. } | CliError::Config(_) => 2,
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}
