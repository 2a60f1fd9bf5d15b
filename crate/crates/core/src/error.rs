use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("market size must be at least 1")]
    EmptyMarket,

    #[error("{what} row {row} is not a permutation of 0..{n}")]
    NotAPermutation { what: &'static str, row: usize, n: usize },

    #[error("expected {expected} rows in {what}, found {found}")]
    WrongRowCount {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("assignment is not a bijection onto 0..{n}")]
    NotABijection { n: usize },

    #[error("size mismatch: market has n = {market}, argument has n = {other}")]
    SizeMismatch { market: usize, other: usize },

    #[error("student {student} has already proposed to every school")]
    StreamExhausted { student: usize },

    #[error("index {index} outside 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("exhaustive enumeration limited to n <= {max}, got n = {n}")]
    SizeGuard { n: usize, max: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("arithmetic overflow in exact rational sum")]
    Overflow,

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
