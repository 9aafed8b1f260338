use std::io;

use thiserror::Error;

use crate::difficulty::DifficultyError;
use crate::embedding::EmbeddingError;
use crate::kmeans::KmeansError;
use crate::metrics::MetricsError;
use crate::scheduler::SchedulerError;
use crate::sim::SimError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Any failure surfaced by the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Kmeans(#[from] KmeansError),
    #[error(transparent)]
    Difficulty(#[from] DifficultyError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("IoFailure: {0}")]
    Io(#[from] io::Error),
    #[error("MalformedJson: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the failure came from the environment (filesystem, pipes)
    /// rather than from the content of the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Embedding(EmbeddingError::IoFailure(_)) => true,
            Error::Json(e) => e.is_io(),
            _ => false,
        }
    }
}
