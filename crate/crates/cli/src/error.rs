use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Numeric(ccs_ica::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io { .. } | CliError::Format { .. } => 4,
        }
    }
}

impl From<ccs_ica::Error> for CliError {
    fn from(e: ccs_ica::Error) -> Self {
        use ccs_ica::Error as E;
        match e {
            E::InvalidInput(_) | E::DimensionMismatch { .. } => CliError::Usage(e.to_string()),
            other => CliError::Numeric(other),
        }
    }
}
