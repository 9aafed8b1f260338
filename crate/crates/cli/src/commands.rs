use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use tacl_core::difficulty::sha256_hex;
use tacl_core::embedding::load_embeddings;
use tacl_core::metrics::{evaluate, parse_predictions_jsonl, PredictionSet};
use tacl_core::protocol::run_session;
use tacl_core::sim::{sweep_beta, sweep_csv, BetaSweep};
use tacl_core::{
    assign_levels, build_manifest, compute_cluster_stats, fit_kmeans, run_simulation, ClusterModel, CurriculumManifest,
    EmbeddingFormat, EmbeddingMatrix, Error, KmeansConfig, Scheduler, SyntheticLearnerConfig,
};

use crate::{Cli, CliError, Command};

type Result<T> = std::result::Result<T, CliError>;

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn core(e: impl Into<Error>) -> CliError {
    CliError::Core(e.into())
}

/// Wraps an error with the file it concerns.
fn at(path: &Path) -> impl Fn(Error) -> CliError + '_ {
    move |source| CliError::File { path: path.display().to_string(), source }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<(T, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| at(path)(e.into()))?;
    let value = serde_json::from_slice(&bytes).map_err(|e| at(path)(e.into()))?;
    Ok((value, bytes))
}

fn read_manifest(path: &Path) -> Result<(CurriculumManifest, Vec<u8>)> {
    let (manifest, bytes): (CurriculumManifest, _) = read_json(path)?;
    manifest.validate().map_err(|e| at(path)(e.into()))?;
    Ok((manifest, bytes))
}

fn read_embeddings(path: &Path, format: EmbeddingFormat) -> Result<EmbeddingMatrix> {
    load_embeddings(path, format).map_err(|e| at(path)(e.into()))
}

fn emit(cli: &Cli, bytes: &[u8]) -> Result<()> {
    match &cli.output {
        Some(path) => fs::write(path, bytes).map_err(|e| at(path)(e.into())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush()).map_err(core)
        }
    }
}

fn emit_json<T: Serialize>(cli: &Cli, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(core)?;
    text.push('\n');
    emit(cli, text.as_bytes())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Cluster { input, format, k, max_iters, tol, normalize, n_init } => {
            let config = KmeansConfig {
                k: *k,
                seed: cli.seed,
                max_iters: *max_iters,
                tol: *tol,
                normalize: *normalize,
                n_init: *n_init,
            };
            config.validate().map_err(usage)?;
            let matrix = read_embeddings(input, *format)?;
            let model = fit_kmeans(&matrix, &config).map_err(core)?;
            log::info!(
                "k = {}: wcss {} after {} iterations (converged: {})",
                model.k,
                model.wcss,
                model.iterations_run,
                model.converged
            );
            emit_json(cli, &model)
        }

        Command::Assign { clusters, input, format } => {
            let (model, _): (ClusterModel, _) = read_json(clusters)?;
            let matrix = read_embeddings(input, *format)?;
            model.check_against(&matrix).map_err(|e| at(clusters)(e.into()))?;
            let stats = compute_cluster_stats(&matrix, &model).map_err(core)?;
            let manifest = build_manifest(&matrix, &model, &assign_levels(&stats)).map_err(core)?;
            log::info!("level counts {:?}", manifest.level_counts);
            emit_json(cli, &manifest)
        }

        Command::Schedule { manifest, scheduler } => {
            let config = scheduler.config();
            config.validate().map_err(usage)?;
            let (manifest, bytes) = read_manifest(manifest)?;
            let mut s = Scheduler::new(config, manifest.level_counts).map_err(core)?;
            let outcome = run_session(
                &mut s,
                manifest.level_counts,
                Some(&sha256_hex(&bytes)),
                io::stdin().lock(),
                &mut io::stdout().lock(),
            )
            .map_err(core)?;
            if !outcome.stopped {
                log::warn!("input ended after {} decisions without a stop", outcome.decisions.len());
            }
            if let Some(path) = &cli.output {
                fs::write(path, s.audit_jsonl()).map_err(|e| at(path)(e.into()))?;
            }
            Ok(())
        }

        Command::Simulate { manifest, scheduler, caps, rate, noise, sweep } => {
            let config = scheduler.config();
            config.validate().map_err(usage)?;
            let learner = SyntheticLearnerConfig {
                caps: [caps[0], caps[1], caps[2]],
                rate: *rate,
                noise_sigma: *noise,
                seed: cli.seed,
            };
            learner.validate(config.direction).map_err(usage)?;
            let sweep: Option<BetaSweep> = sweep.as_deref().map(str::parse).transpose().map_err(usage)?;
            let (manifest, _) = read_manifest(manifest)?;
            match sweep {
                Some(sweep) => {
                    let rows = sweep_beta(
                        manifest.level_counts,
                        Some(manifest.provenance.k),
                        &config,
                        &learner,
                        &sweep.values(),
                    )
                    .map_err(core)?;
                    emit(cli, sweep_csv(&rows).as_bytes())
                }
                None => {
                    let report = run_simulation(&manifest, &config, &learner).map_err(core)?;
                    emit_json(cli, &report)
                }
            }
        }

        Command::Metrics { pred, task, k, threshold } => {
            if !(0.0..=1.0).contains(threshold) {
                return Err(usage(format!("threshold must lie in [0, 1], got {threshold}")));
            }
            if *k == Some(0) {
                return Err(usage("k must be at least 1"));
            }
            let text = fs::read_to_string(pred).map_err(|e| at(pred)(e.into()))?;
            let records = parse_predictions_jsonl(&text).map_err(|e| at(pred)(e.into()))?;
            let set = PredictionSet::new(*task, &records, *threshold).map_err(core)?;
            emit_json(cli, &evaluate(&set, *k).map_err(core)?)
        }
    }
}
