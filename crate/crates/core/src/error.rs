use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the watermarking toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the named operation.
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// Input length does not match what a component expects.
    #[error("length mismatch in {what}: expected {expected}, got {actual}")]
    Length {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A configuration field holds an unusable value.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("wav: {0}")]
    Wav(String),

    #[error("unsupported channel count {0}: only mono audio is accepted")]
    Channels(u16),

    #[error("unsupported sample rate {0} Hz: expected {1} Hz")]
    SampleRate(u32, u32),

    /// Every key of the requested length is excluded.
    #[error("key space of {bits} bits exhausted by {excluded} exclusions")]
    KeySpaceExhausted { bits: usize, excluded: usize },

    /// Two stacked watermarks were given the same key.
    #[error("duplicate key {0} in watermark stack")]
    DuplicateKey(String),

    #[error("non-finite value at training step {step}: {what}")]
    NonFinite { step: u64, what: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("failed to read corpus files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    Corpus(Vec<PathBuf>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Bad user input, as opposed to a failure while doing the work.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Length { .. }
                | Error::Config { .. }
                | Error::Channels(_)
                | Error::SampleRate(..)
                | Error::DuplicateKey(_)
                | Error::Parse(_)
        )
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}

impl From<hound::Error> for Error {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::IoError(io) => Error::Io(io),
            other => Error::Wav(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
