use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("amplifying factor {beta} outside (0, {limit})")]
    BetaOutOfRange { beta: f64, limit: f64 },

    #[error("relay output diverged at sample {index} (|t| = {magnitude:e})")]
    RelayDiverged { index: usize, magnitude: f64 },

    #[error("|h_SR| = {0:e} too small to invert")]
    SingularInversion(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("frame length {len} too long for exhaustive ML (max {max})")]
    FrameTooLong { len: usize, max: usize },

    #[error("not enough points for a slope fit: {have} < {need}")]
    InsufficientPoints { have: usize, need: usize },
}

impl Error {
    /// Process exit code used by the CLI for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) | Error::FrameTooLong { .. } => 2,
            _ => 3,
        }
    }
}
