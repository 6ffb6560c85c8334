use std::io;

use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] crowdbp::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("line {line}: {msg}")]
    Data { line: u64, msg: String },
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl HarnessError {
    /// Process exit code: 2 for parameters, 3 for data and files, 4 for
    /// numeric degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Core(crowdbp::Error::NumericDegeneracy { .. }) => 4,
            HarnessError::Core(_) | HarnessError::Config(_) => 2,
            HarnessError::Data { .. } | HarnessError::Format(_) | HarnessError::Csv(_) | HarnessError::Io(_) => 3,
        }
    }

    pub(crate) fn data(line: u64, msg: impl Into<String>) -> Self {
        HarnessError::Data { line, msg: msg.into() }
    }
}
