use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index ({row}, {col}) out of range for {n_rows}x{n_cols} matrix")]
    Index {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parameter layout mismatch: {0}")]
    Layout(String),

    #[error("shape mismatch: expected {expected} values, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("critic diverged at step {step} (loss = {loss}); try a smaller critic learning rate")]
    CriticDiverged { step: usize, loss: f64 },

    #[error("empty batch: {0}")]
    EmptyBatch(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
