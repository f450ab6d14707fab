use thiserror::Error;

/// Failures mapped onto the process exit-code contract.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("fit did not converge: {0}")]
    NotConverged(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn config(e: condsqz_core::Error) -> Self {
        Self::Config(e.to_string())
    }

    pub fn data(e: condsqz_core::Error) -> Self {
        Self::Data(e.to_string())
    }

    /// Errors from writing outputs.
    pub fn output(e: condsqz_core::Error) -> Self {
        Self::Other(e.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Other(_) => 1,
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::NotConverged(_) => 4,
        }
    }
}
