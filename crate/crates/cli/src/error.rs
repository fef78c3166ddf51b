use std::path::Path;

use serde::Serialize;

/// Command failure, classified by process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Validation(_) => "validation",
            CliError::Numerical(_) => "numerical",
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Validation(format!("{}: {e}", path.display()))
    }

    pub fn json(path: &Path, e: serde_json::Error) -> Self {
        CliError::Validation(format!("{}: {e}", path.display()))
    }

    /// Body of the `--json` error report.
    pub fn report(&self) -> ErrorReport<'_> {
        ErrorReport { error: ErrorBody { kind: self.kind(), message: self.to_string(), exit_code: self.exit_code() } }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorReport<'a> {
    pub error: ErrorBody<'a>,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody<'a> {
    pub kind: &'a str,
    pub message: String,
    pub exit_code: i32,
}

impl From<dentvox_core::Error> for CliError {
    fn from(e: dentvox_core::Error) -> Self {
        match e {
            dentvox_core::Error::NonFinite(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
