use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {lhs_rows}x{lhs_cols}, right is {rhs_rows}x{rhs_cols}")]
    ShapeMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    #[error("non-finite value encountered in {op}")]
    NonFinite { op: &'static str },

    #[error("invalid dimension for {what}: {value}")]
    InvalidDimension { what: &'static str, value: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("token {token} out of vocabulary (size {vocab})")]
    OutOfVocab { token: usize, vocab: usize },

    #[error("sequence length {n} exceeds model maximum {max_n}")]
    SequenceTooLong { n: usize, max_n: usize },

    #[error("matrix is not row-stochastic within tolerance {tol} (row {row} sums to {sum})")]
    NotStochastic { row: usize, sum: f64, tol: f64 },

    #[error("attention capture is empty or inconsistent: {0}")]
    Capture(String),

    #[error("training diverged at step {step}: {what}")]
    Diverged { step: usize, what: String },

    #[error("norm constraint violated: {what} has spectral norm {norm}, required <= {limit}")]
    NormConstraint {
        what: &'static str,
        norm: f64,
        limit: f64,
    },

    #[error("epsilon target {target} is unreachable: {why}")]
    EpsilonTarget { target: f64, why: String },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
