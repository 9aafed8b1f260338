//! `tacl`: cluster embeddings, grade clusters by difficulty, and drive or
//! simulate the stage scheduler.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 runtime error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use tacl_core::metrics::TaskKind;
use tacl_core::{Direction, EmbeddingFormat, SchedulerConfig};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "tacl", version, about = "Difficulty-graded curriculum pipeline")]
pub struct Cli {
    /// Seed for k-means++ seeding and the synthetic learner.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// stderr log level: off, error, warn, info, debug, trace.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,

    /// Write the result here instead of stdout. For `schedule` this is the
    /// JSONL audit log of transitions and the stop.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit k-means and write the cluster model JSON.
    Cluster {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "binary")]
        format: EmbeddingFormat,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// L2-normalize embeddings before clustering.
        #[arg(long)]
        normalize: bool,
        /// k-means++ restarts; the lowest-WCSS run is kept.
        #[arg(long, default_value_t = 10)]
        n_init: usize,
    },
    /// Grade clusters into easy/medium/hard and write the manifest JSON.
    Assign {
        #[arg(long)]
        clusters: PathBuf,
        /// Embeddings the model was fitted on.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "binary")]
        format: EmbeddingFormat,
    },
    /// Run the scheduler as a line-delimited JSON session on stdin/stdout.
    Schedule {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        scheduler: SchedulerArgs,
    },
    /// Drive the scheduler with a synthetic learner.
    Simulate {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        scheduler: SchedulerArgs,
        /// Learner asymptotes for pools of one, two and three levels.
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.5, 0.65, 0.8])]
        caps: Vec<f64>,
        #[arg(long, default_value_t = 0.7)]
        rate: f64,
        /// Standard deviation of the Gaussian noise added to each epoch.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Sweep beta, e.g. `beta=0.5:0.9:0.1`; writes CSV instead of a report.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Compute F1, AUROC and P@K from a predictions JSONL file.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        task: TaskKind,
        /// Report precision at this K.
        #[arg(long)]
        k: Option<usize>,
        /// Score threshold for hard multilabel (and single-score binary) predictions.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SchedulerArgs {
    #[arg(long, default_value_t = 0.7)]
    pub beta: f64,
    /// Sliding window size.
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    /// Final-stage epochs without a new best macro-F1 before stopping.
    #[arg(long, default_value_t = 5)]
    pub patience: u32,
    /// Epoch budget.
    #[arg(long, default_value_t = 30)]
    pub epochs: u32,
    #[arg(long, default_value = "forward")]
    pub direction: Direction,
    /// Clear the growth window whenever the pool expands.
    #[arg(long)]
    pub reset_window: bool,
    /// Treat a full window with non-positive average growth as saturated.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub stagnation_saturates: bool,
}

impl SchedulerArgs {
    pub fn config(&self) -> SchedulerConfig {
        SchedulerConfig {
            window_n: self.window,
            beta: self.beta,
            total_epochs: self.epochs,
            patience: self.patience,
            direction: self.direction,
            reset_window_on_transition: self.reset_window,
            stagnation_as_saturation: self.stagnation_saturates,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] tacl_core::Error),
    #[error("{path}: {source}")]
    File { path: String, source: tacl_core::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) | CliError::File { source: e, .. } if e.is_io() => 4,
            CliError::Core(_) | CliError::File { .. } => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
