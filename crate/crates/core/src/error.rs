//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite factor `{factor}` in trajectory {traj} at step {step}")]
    NonFiniteFactor {
        traj: u64,
        step: usize,
        factor: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown loss kind: {0}")]
    UnknownLoss(String),

    #[error("unknown model kind: {0}")]
    UnknownKind(String),

    #[error("unknown environment: {0}")]
    UnknownEnv(String),

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
