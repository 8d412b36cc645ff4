use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the core library.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// A label string that the schema does not know.
    UnknownLabel {
        label: String,
        schema: String,
    },
    /// Target tokens alone do not fit into the configured sequence length.
    TargetTooLong {
        target_len: usize,
        max_len: usize,
    },
    /// Input is longer than an encoder accepts.
    SequenceTooLong {
        len: usize,
        max_len: usize,
    },
    /// Token id outside the vocabulary.
    TokenOutOfRange {
        token: u32,
        vocab_size: usize,
    },
    /// Two widths that must agree did not.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    /// Sentiment labels with no VAD binding.
    UnmappedSentiment {
        labels: Vec<String>,
    },
    /// A lexicon term lookup that failed.
    UnknownTerm(String),
    /// VAD component outside `[0, 1]` or not finite.
    VadOutOfRange {
        what: String,
        value: f64,
    },
    /// A loss or statistic became NaN or infinite.
    NonFinite {
        term: &'static str,
    },
    /// Training-mode batch normalization needs at least two rows.
    BatchTooSmall {
        size: usize,
    },
    LengthMismatch {
        gold: usize,
        pred: usize,
    },
    /// A protocol precondition failed (missing split, overlapping targets...).
    Protocol(String),
    InvalidConfig(String),
    /// Something wrong with an in-memory data set.
    Data(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::UnknownLabel { label, schema } => {
                write!(f, "unknown label {label:?} for schema {schema}")
            }
            Error::TargetTooLong { target_len, max_len } => write!(
                f,
                "target of {target_len} tokens does not fit max length {max_len} (needs {} with specials)",
                target_len + 3
            ),
            Error::SequenceTooLong { len, max_len } => {
                write!(f, "sequence of length {len} exceeds maximum {max_len}")
            }
            Error::TokenOutOfRange { token, vocab_size } => {
                write!(f, "token id {token} out of range for vocabulary of {vocab_size}")
            }
            Error::DimensionMismatch { what, expected, actual } => {
                write!(f, "{what}: expected width {expected}, got {actual}")
            }
            Error::UnmappedSentiment { labels } => {
                write!(f, "sentiment labels without a VAD binding: {}", labels.join(", "))
            }
            Error::UnknownTerm(term) => write!(f, "term {term:?} not found in lexicon"),
            Error::VadOutOfRange { what, value } => {
                write!(f, "VAD value {value} for {what} is outside [0, 1]")
            }
            Error::NonFinite { term } => write!(f, "non-finite value in {term}"),
            Error::BatchTooSmall { size } => {
                write!(f, "training-mode batch normalization needs at least 2 rows, got {size}")
            }
            Error::LengthMismatch { gold, pred } => {
                write!(f, "gold has {gold} labels but predictions have {pred}")
            }
            Error::Protocol(msg) => write!(f, "protocol error: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T, E = Error> = core::result::Result<T, E>;
