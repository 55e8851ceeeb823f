//! Crate-wide error type.
//!
//! Shape mismatches inside the numeric core (`tensor`, `mlp`) are programmer
//! errors and panic via `assert!`; everything that touches user input (config,
//! data files, model files) returns [`Error`].

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration or hyperparameter value; the message names the field.
    #[error("config: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("data: {0}")]
    Data(String),

    /// Non-finite loss or parameters during training.
    #[error("numeric divergence: {0}")]
    Divergence(String),

    /// Model file carries a format version this build does not understand.
    #[error("model file {path}: format version {found}, expected {expected}")]
    ModelVersion {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    /// Model file is truncated or structurally invalid.
    #[error("model file corrupt: {0}")]
    ModelCorrupt(String),

    /// Model file parsed but its pieces disagree (e.g. pool dimension vs. hypernetwork input).
    #[error("model file inconsistent: {0}")]
    ModelInconsistent(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data, 4 divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Csv(_) => 3,
            Error::Divergence(_) => 4,
            _ => 1,
        }
    }
}
