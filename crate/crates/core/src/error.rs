use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two series or matrices that do not cover the same sample ids.
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    /// Structural constraints from the model: non-negative weights, odd K for
    /// majority vote, theta inside (0.5, 1).
    #[error("constraint violation: {0}")]
    Constraint(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("weights sum to zero")]
    DegenerateWeights,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn constraint(msg: impl Into<String>) -> Self {
        Error::Constraint(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status used by the command-line tool.
    ///
    /// 2 = input validation, 3 = constraint violation, 4 = I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Constraint(_) => 3,
            Error::Io { .. } => 4,
            _ => 2,
        }
    }
}
