use std::path::PathBuf;

use strawcast_core::DataError;
use strawcast_nn::NnError;
use thiserror::Error;

/// Process exit codes by failure class.
pub mod exit {
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("missing {path}; run `strawcast {producer}` first")]
    MissingUpstream { path: PathBuf, producer: &'static str },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Data(_) | CliError::MissingUpstream { .. } => exit::DATA,
            CliError::Numeric(_) => exit::NUMERIC,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::DegenerateTarget => CliError::Numeric(e.to_string()),
            DataError::InvalidParameter(_) | DataError::ComponentsTooLarge { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            NnError::InvalidSpec(_) | NnError::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
