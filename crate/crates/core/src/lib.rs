//! Threshold-adaptive curriculum learning engine.
//!
//! The pipeline runs in four independent stages, each with a serializable
//! hand-off artifact:
//!
//! 1. [`embedding`]: load and validate precomputed sample embeddings.
//! 2. [`kmeans`]: partition the embeddings into `k` clusters.
//! 3. [`difficulty`]: score clusters by density and centroid distance and
//!    group them into Easy / Medium / Hard levels.
//! 4. [`scheduler`]: drive an external training loop through the curriculum,
//!    advancing when macro-F1 growth saturates.
//!
//! [`metrics`] computes the evaluation signals the scheduler consumes, and
//! [`sim`] provides a deterministic synthetic learner for exercising the
//! scheduler without real training.

pub mod difficulty;
pub mod embedding;
pub mod error;
pub mod kmeans;
pub mod metrics;
pub mod protocol;
pub mod rng;
pub mod scheduler;
pub mod sim;

pub use difficulty::{
    assign_levels, build_manifest, compute_cluster_stats, ClusterStats, CurriculumManifest, DifficultyLevel,
    LevelCounts,
};
pub use embedding::{EmbeddingFormat, EmbeddingMatrix, SampleRecord};
pub use error::{Error, Result};
pub use kmeans::{compute_wcss, fit_kmeans, ClusterModel, KmeansConfig};
pub use scheduler::{Direction, Scheduler, SchedulerConfig, SchedulerDecision, StopReason};
pub use sim::{run_simulation, RunReport, SyntheticLearnerConfig};
