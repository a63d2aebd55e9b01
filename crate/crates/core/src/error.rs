use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the library. Parse errors carry 1-based line numbers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("duplicate phoneme label {label:?} at line {line}")]
    DuplicateLabel { label: String, line: usize },
    #[error("phoneme inventory is empty")]
    EmptyInventory,
    #[error("unknown phoneme {label:?} at line {line}")]
    UnknownPhoneme { label: String, line: usize },
    #[error("non-positive phone length at line {line}")]
    NonPositiveLength { line: usize },
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("non-positive component at index {index}: {value}")]
    NonPositiveComponent { index: usize, value: f64 },
    #[error("zero-norm embedding")]
    ZeroNorm,
    #[error("unknown utterance {0:?}")]
    UnknownUtterance(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least 2 speakers to train, got {0}")]
    InsufficientSpeakers(usize),
    #[error("model format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { found: u8, expected: u8 },
    #[error("corrupt model payload: {0}")]
    CorruptPayload(String),

    #[error("no speaker has enough utterances for the requested setup")]
    NoEligibleSpeakers,
    #[error("degenerate trial list: {0}")]
    DegenerateList(String),
}

impl Error {
    pub(crate) fn malformed(line: usize, reason: impl Into<String>) -> Self {
        Error::MalformedLine {
            line,
            reason: reason.into(),
        }
    }
}
