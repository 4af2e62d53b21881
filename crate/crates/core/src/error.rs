use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),

    #[error("enumeration of {requested} sequences exceeds the cap of {cap}")]
    EnumerationCap { requested: u128, cap: u64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("incompatible models: {0}")]
    Incompatible(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = core::result::Result<T, Error>;
