//! CLI error taxonomy: validation failures exit 1, runtime failures exit 2,
//! both with a machine-readable JSON line on stderr.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Runtime(_) => "runtime",
        }
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct ErrJson<'a> {
            kind: &'a str,
            message: String,
        }
        serde_json::to_string(&ErrJson {
            kind: self.kind(),
            message: self.to_string(),
        })
        .expect("error json")
    }
}

impl From<ustar_core::data::DataError> for CliError {
    fn from(e: ustar_core::data::DataError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<ustar_core::sim::SimError> for CliError {
    fn from(e: ustar_core::sim::SimError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<ustar_core::models::ModelError> for CliError {
    fn from(e: ustar_core::models::ModelError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<ustar_core::sampling::SamplingError> for CliError {
    fn from(e: ustar_core::sampling::SamplingError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
