use thiserror::Error;

/// Errors raised anywhere in the ranking, statistic and calibration pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("data matrix must have at least {min_rows} rows and 2 columns, got {rows}x{cols}")]
    Shape { rows: usize, cols: usize, min_rows: usize },

    #[error("row {row} has {got} values, expected {expected}")]
    RaggedRow { row: usize, expected: usize, got: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("ties present in column {col} (value {value}); continuous data are required")]
    TiesPresent { col: usize, value: f64 },

    #[error("column {col} is not a permutation of 1..={n}")]
    NotAPermutation { col: usize, n: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("kernel of degree {expected} called with {got} points")]
    WrongArity { expected: usize, got: usize },

    #[error("sample size n = {n} is too small, need n >= {min}")]
    SampleTooSmall { n: usize, min: usize },

    #[error("no validated constant available for {0}")]
    UnknownConstant(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("signal {signal} is infeasible: {reason}")]
    InfeasibleSignal { signal: f64, reason: String },

    #[error("scatter matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
