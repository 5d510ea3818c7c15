//! Error types shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Requested state size exceeds the simulator capacity.
    #[error("{requested} qubits exceeds the simulator cap of {max} qubits")]
    Capacity { requested: usize, max: usize },

    /// Qubit index outside 1..=n.
    #[error("qubit index {index} out of range 1..={qubits}")]
    QubitIndex { index: usize, qubits: usize },

    /// Array/tensor dimensions do not match the declared shape.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input violates a precondition (non-finite value, bad label, ...).
    #[error("invalid input: {0}")]
    Validation(String),

    /// Iterative routine failed to converge or produced a non-real result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Binary or text file does not match its documented format.
    #[error("{}: format error at byte {offset}: {message}", path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// All configuration problems found, not just the first.
    #[error("configuration errors:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }
}
