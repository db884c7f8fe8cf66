use std::path::PathBuf;

use thiserror::Error;

/// Failure of a command, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] cuelab_core::Error),

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn data(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        CliError::Data {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// 2 usage error, 3 data error, 4 internal invariant violation.
    pub fn exit_code(&self) -> i32 {
        use cuelab_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(E::InvalidParameter(_) | E::InfeasibleSpec(_)) => 2,
            CliError::Core(_) | CliError::Data { .. } => 3,
            CliError::Invariant(_) => 4,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_class() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(CliError::from(cuelab_core::Error::InvalidParameter("x".into())).exit_code(), 2);
        assert_eq!(CliError::data("a.png", "truncated").exit_code(), 3);
        assert_eq!(CliError::Invariant("x".into()).exit_code(), 4);
    }
}
