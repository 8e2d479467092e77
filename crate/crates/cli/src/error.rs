//! One error family per exit code: 2 config, 3 I/O, 4 numeric.

use hdst_core::metrics::MetricError;
use hdst_core::net::CheckpointError;
use hdst_core::noise::{CubeError, NoiseError, PatchError};
use hdst_core::tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("numeric: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Io(e.to_string())
    }
}

impl From<CubeError> for CliError {
    fn from(e: CubeError) -> CliError {
        CliError::Io(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> CliError {
        CliError::Io(e.to_string())
    }
}

impl From<NoiseError> for CliError {
    fn from(e: NoiseError) -> CliError {
        CliError::Config(e.to_string())
    }
}

impl From<PatchError> for CliError {
    fn from(e: PatchError) -> CliError {
        CliError::Config(e.to_string())
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> CliError {
        CliError::Config(e.to_string())
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> CliError {
        match e {
            TensorError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
