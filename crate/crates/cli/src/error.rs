//! Error classification driving process exit codes.

use std::fmt;

/// Exit codes: 2 for configuration problems, 3 for data or structural
/// problems, 4 for lineage violations.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Lineage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Lineage(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Lineage(m) => write!(f, "lineage error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<linkstream::records::IngestError> for CliError {
    fn from(e: linkstream::records::IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<linkstream::comparators::CompareError> for CliError {
    fn from(e: linkstream::comparators::CompareError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<linkstream::store::StoreError> for CliError {
    fn from(e: linkstream::store::StoreError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<linkstream::evaluation::EvalError> for CliError {
    fn from(e: linkstream::evaluation::EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<linkstream::synthgen::GenError> for CliError {
    fn from(e: linkstream::synthgen::GenError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<linkstream::samplers::SamplerError> for CliError {
    fn from(e: linkstream::samplers::SamplerError) -> Self {
        use linkstream::samplers::SamplerError as S;
        match e {
            S::BadIterations { .. } | S::EmptyPool | S::EmptyEnsemble => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
