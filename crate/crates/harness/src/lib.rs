//! Toy training harness: synthetic data, an autoencoding task and a masked
//! contrastive task, the training loop, evaluation, checkpoints and the
//! diagnostics behind the `simplexvq` CLI.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod demo;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod runlog;
pub mod schedule;
pub mod tasks;
pub mod train;

pub use config::{RunConfig, Task};
pub use train::{train, TrainOutcome, Trainer};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] simplexvq::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
