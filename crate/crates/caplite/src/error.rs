//! Crate-wide error type. Validation-class errors exit the CLI with code 1,
//! I/O-class errors with code 2.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error(
        "shape mismatch in {op}: left is {lhs_rows}x{lhs_cols}, right is {rhs_rows}x{rhs_cols}"
    )]
    ShapeMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),

    #[error("gradcheck: {0}")]
    GradCheck(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path} line {line}: {msg}")]
    Dataset {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: String, reason: String },

    #[error("{0}")]
    Validation(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
