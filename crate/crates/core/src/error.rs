use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported audio encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("sample rate {found} Hz, expected {expected} Hz")]
    SampleRateMismatch { found: u32, expected: u32 },
    #[error("file contains no samples")]
    EmptyFile,
    #[error("bad magic bytes, not a SEF1 container")]
    BadMagic,
    #[error("dimension overflow: {0}")]
    DimOverflow(String),
    #[error("truncated payload: need {needed} bytes, have {available}")]
    TruncatedPayload { needed: u64, available: u64 },
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("signal too short: {samples} samples, window needs {window}")]
    TooShort { samples: usize, window: usize },
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("bad channel index {index} for {channels} channels")]
    BadChannelIndex { index: usize, channels: usize },
    #[error("spatial feature needs at least two channels, got {0}")]
    NeedTwoChannels(usize),
    #[error("channel dimension {0} is odd, cannot split in halves")]
    OddChannels(usize),
    #[error("spec mismatch: {0}")]
    SpecMismatch(String),
    #[error("bad scene: {0}")]
    BadScene(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Stable class name, used for machine-readable error reporting.
    pub fn class(&self) -> &'static str {
        match self {
            Error::UnsupportedEncoding(_) => "UnsupportedEncoding",
            Error::SampleRateMismatch { .. } => "SampleRateMismatch",
            Error::EmptyFile => "EmptyFile",
            Error::BadMagic => "BadMagic",
            Error::DimOverflow(_) => "DimOverflow",
            Error::TruncatedPayload { .. } => "TruncatedPayload",
            Error::Malformed(_) => "Malformed",
            Error::TooShort { .. } => "TooShort",
            Error::BadShape(_) => "BadShape",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::OutOfRange(_) => "OutOfRange",
            Error::BadChannelIndex { .. } => "BadChannelIndex",
            Error::NeedTwoChannels(_) => "NeedTwoChannels",
            Error::OddChannels(_) => "OddChannels",
            Error::SpecMismatch(_) => "SpecMismatch",
            Error::BadScene(_) => "BadScene",
            Error::Config(_) => "ConfigError",
            Error::Io(_) => "Io",
        }
    }

    /// Whether the error stems from user input (bad files, bad config) rather
    /// than an internal failure.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::SpecMismatch(_) | Error::BadScene(_))
    }
}
