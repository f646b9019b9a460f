//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in layer `{layer}`")]
    NonFinite { layer: &'static str },

    #[error("no neighbors available for social features (lone agent)")]
    LoneAgent,

    #[error("empty dataset passed to {0}")]
    EmptyDataset(&'static str),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Divergence {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("simulation produced non-finite forces at tick {tick}, agent {agent}")]
    SimNonFinite { tick: u64, agent: u64 },

    #[error("metric log is missing records: {0}")]
    MissingRecords(String),

    #[error("metric inputs have mismatched lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty sample passed to {0}")]
    EmptySample(&'static str),

    #[error("missing result cell for strategy `{strategy}`, sequence `{sequence}`")]
    MissingCell { strategy: String, sequence: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
