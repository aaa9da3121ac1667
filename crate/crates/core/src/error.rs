use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index ({k}, {l}) out of range for a {n}x{m} grid")]
    IndexOutOfRange { k: usize, l: usize, n: usize, m: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid grid dimensions: {0}")]
    InvalidDims(String),

    #[error("fractional tap: {0}")]
    FractionalTap(String),

    #[error("tap (alpha={alpha}, beta={beta}) outside the {n}x{m} grid")]
    TapOutOfRange { alpha: usize, beta: usize, n: usize, m: usize },

    #[error("duplicate tap at (alpha={alpha}, beta={beta})")]
    DuplicateTap { alpha: usize, beta: usize },

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("pilot plan rejected: {0}")]
    PilotPlan(String),

    #[error("cannot estimate noise floor: no grid cells outside the guard regions")]
    NoNoiseCells,

    #[error("exhaustive search over {0} candidates exceeds the 2^20 limit")]
    SearchTooLarge(u128),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
