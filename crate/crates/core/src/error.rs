//! Error type shared across the core pipeline.

use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

/// Errors produced by the core pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A value that must be finite was NaN or infinite.
    NonFinite { context: &'static str },
    /// A dimension or length did not match what the operation expected.
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    /// An operation that needs at least one element received none.
    EmptyInput { context: &'static str },
    /// Invalid configuration; the message names the offending field.
    Config(String),
    /// A dataset label fell outside `[0, classes)`.
    LabelOutOfRange { index: usize, label: usize, classes: usize },
    /// Training produced a non-finite loss.
    Divergence { round: u32, client: u32 },
    /// Pearson correlation of a constant vector is undefined.
    DegenerateSimilarity { i: usize, j: usize },
    /// A block's `prev_hash` does not match the chain tip.
    ChainLink { height: u64 },
    /// A block's stored hash does not match its recomputed contents.
    ChainHash { height: u64 },
    /// Applying a transaction would drive a balance below zero.
    NegativeBalance { client: u32 },
    /// A transaction referenced a client unknown to the ledger.
    UnknownClient { client: u32 },
    /// A simulation step failed; wraps the cause with round context.
    InRound {
        round: u32,
        step: &'static str,
        source: Box<Error>,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Error::ShapeMismatch {
                context,
                expected,
                actual,
            } => write!(f, "shape mismatch in {context}: expected {expected}, got {actual}"),
            Error::EmptyInput { context } => write!(f, "empty input in {context}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::LabelOutOfRange {
                index,
                label,
                classes,
            } => write!(f, "label {label} at index {index} outside [0, {classes})"),
            Error::Divergence { round, client } => {
                write!(f, "training diverged (non-finite loss) at round {round}, client {client}")
            }
            Error::DegenerateSimilarity { i, j } => {
                write!(f, "degenerate similarity between prototypes {i} and {j} (zero variance)")
            }
            Error::ChainLink { height } => {
                write!(f, "block at height {height} does not link to the chain tip")
            }
            Error::ChainHash { height } => {
                write!(f, "block hash mismatch at height {height}")
            }
            Error::NegativeBalance { client } => {
                write!(f, "transaction would drive client {client} balance below zero")
            }
            Error::UnknownClient { client } => write!(f, "unknown client {client}"),
            Error::InRound { round, step, source } => {
                write!(f, "round {round}, step {step}: {source}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

impl Error {
    /// Wraps `self` with the round and step where it occurred.
    pub fn in_round(self, round: u32, step: &'static str) -> Error {
        Error::InRound {
            round,
            step,
            source: Box::new(self),
        }
    }
}
