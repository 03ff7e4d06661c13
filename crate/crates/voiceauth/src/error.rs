//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed container or header while decoding an input file.
    #[error("format error: {0}")]
    Format(String),

    /// File decoded but its encoding is not supported (e.g. stereo WAV).
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    /// Input too short to produce any output at all.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A requested range falls outside the data it indexes.
    #[error("range error: {0}")]
    Range(String),

    /// Not enough data to estimate or score the requested model.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A computation produced a non-finite value.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A metric is undefined for the given trial set.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A decision was requested but every window abstained.
    #[error("no decision: {0}")]
    NoDecision(String),

    /// Corpus manifest violates its invariants.
    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
