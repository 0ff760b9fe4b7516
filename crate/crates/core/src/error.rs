use std::path::PathBuf;

/// Errors raised by the fitting engine and the synthetic lab.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("point behind camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("degenerate model: {0}")]
    DegenerateModel(String),
    #[error("degenerate skinning at vertex {vertex}: condition number {condition:e}")]
    DegenerateSkinning { vertex: usize, condition: f64 },
    #[error("degenerate observation: {0}")]
    DegenerateObservation(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("initialization failed for frame {frame}: {reason}")]
    Initialization { frame: usize, reason: String },
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse { path: path.into(), message: message.to_string() }
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::ContractViolation(msg()))
    }
}
