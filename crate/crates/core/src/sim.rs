//! Deterministic synthetic learner for exercising the scheduler.
//!
//! Within a stage the learner's macro-F1 follows a saturating exponential
//! that starts from the value reached at the previous transition (the
//! floor, 0 for the first stage) and approaches the stage's cap:
//!
//! ```text
//! F = floor + (cap - floor) * (1 - exp(-rate * epochs_in_stage)) + sigma * z
//! ```
//!
//! clamped to `[0, 1]`, with `z` standard normal from the portable PRNG.
//! Caps are indexed by how many levels the pool holds (1, 2 or 3).

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::difficulty::{CurriculumManifest, LevelCounts};
use crate::rng::XorShift64Star;
use crate::scheduler::{Action, Direction, Scheduler, SchedulerConfig, SchedulerError, StopReason, Transition};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error("InvalidSweep: {0}")]
    InvalidSweep(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticLearnerConfig {
    /// Asymptotic macro-F1 for pools of one, two and three levels.
    pub caps: [f64; 3],
    pub rate: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticLearnerConfig {
    fn default() -> Self {
        Self { caps: [0.5, 0.65, 0.8], rate: 0.7, noise_sigma: 0.0, seed: 0 }
    }
}

impl SyntheticLearnerConfig {
    pub fn validate(&self, direction: Direction) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.caps.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return bad(format!("caps must lie in [0, 1], got {:?}", self.caps));
        }
        if direction == Direction::Forward && self.caps.windows(2).any(|w| w[0] > w[1]) {
            return bad(format!("forward caps must be weakly increasing, got {:?}", self.caps));
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return bad(format!("rate must be positive, got {}", self.rate));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        Ok(())
    }
}

/// One epoch of the synthetic learner. `depth` is the number of levels in
/// the pool and `epochs_in_stage` counts from 1 at the first epoch on it.
pub fn step_learner(
    config: &SyntheticLearnerConfig,
    depth: usize,
    epochs_in_stage: u32,
    floor: f64,
    rng: &mut XorShift64Star,
) -> f64 {
    let cap = config.caps[depth - 1];
    let progress = 1.0 - (-config.rate * f64::from(epochs_in_stage)).exp();
    let mut f = floor + (cap - floor) * progress;
    if config.noise_sigma > 0.0 {
        f += config.noise_sigma * rng.next_gaussian();
    }
    f.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub stage: String,
    pub epochs_in_stage: u32,
    pub macro_f1: f64,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub direction: Direction,
    pub k: Option<usize>,
    pub level_counts: LevelCounts,
    pub scheduler: SchedulerConfig,
    pub learner: SyntheticLearnerConfig,
    pub trajectory: Vec<EpochRecord>,
    pub transitions: Vec<Transition>,
    pub stop_epoch: u32,
    pub stop_reason: StopReason,
    pub final_f1: f64,
}

impl RunReport {
    pub fn transition_epochs(&self) -> Vec<u32> {
        self.transitions.iter().map(|t| t.epoch).collect()
    }

    pub fn macro_f1_trajectory(&self) -> Vec<f64> {
        self.trajectory.iter().map(|e| e.macro_f1).collect()
    }
}

pub fn run_simulation(
    manifest: &CurriculumManifest,
    scheduler: &SchedulerConfig,
    learner: &SyntheticLearnerConfig,
) -> Result<RunReport, SimError> {
    simulate(manifest.level_counts, Some(manifest.provenance.k), scheduler, learner)
}

/// Drives a fresh scheduler with the synthetic learner until it stops.
pub fn simulate(
    counts: LevelCounts,
    k: Option<usize>,
    scheduler_config: &SchedulerConfig,
    learner: &SyntheticLearnerConfig,
) -> Result<RunReport, SimError> {
    learner.validate(scheduler_config.direction)?;
    let mut scheduler = Scheduler::new(scheduler_config.clone(), counts)?;
    let mut rng = XorShift64Star::new(learner.seed);
    let mut trajectory = Vec::new();
    let mut floor = 0.0;
    let mut epochs_in_stage = 0;

    loop {
        let stage = scheduler.stage();
        epochs_in_stage += 1;
        let f1 = step_learner(learner, stage.depth, epochs_in_stage, floor, &mut rng);
        let decision = scheduler.observe_epoch(f1)?;
        trajectory.push(EpochRecord {
            epoch: decision.epoch,
            stage: stage.name().to_owned(),
            epochs_in_stage,
            macro_f1: f1,
            action: decision.action,
        });
        match decision.action {
            Action::Continue => {}
            Action::Advance => {
                floor = f1;
                epochs_in_stage = 0;
            }
            Action::Stop => break,
        }
    }

    let (stop_epoch, stop_reason) = scheduler.state().terminated.expect("loop exits on stop");
    let final_f1 = trajectory.last().map_or(0.0, |e: &EpochRecord| e.macro_f1);
    Ok(RunReport {
        direction: scheduler_config.direction,
        k,
        level_counts: counts,
        scheduler: scheduler_config.clone(),
        learner: learner.clone(),
        trajectory,
        transitions: scheduler.state().transitions.clone(),
        stop_epoch,
        stop_reason,
        final_f1,
    })
}

/// Inclusive `start:end:step` range of beta values, e.g. `beta=0.5:0.9:0.1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSweep {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl BetaSweep {
    /// Values rounded to 1e-9 so decimal steps print cleanly.
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| ((self.start + i as f64 * self.step) * 1e9).round() / 1e9).collect()
    }
}

impl FromStr for BetaSweep {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |m: &str| SimError::InvalidSweep(format!("{m} in {s:?} (expected beta=start:end:step)"));
        let range = s.strip_prefix("beta=").ok_or_else(|| bad("missing beta= prefix"))?;
        let parts: Vec<f64> = range
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("non-numeric bound"))?;
        let [start, end, step] = parts[..] else {
            return Err(bad("need exactly three fields"));
        };
        if !(start > 0.0 && end < 1.0 && start <= end && step > 0.0) {
            return Err(bad("need 0 < start <= end < 1 and step > 0"));
        }
        if (end - start) / step > 10_000.0 {
            return Err(bad("too many sweep points"));
        }
        Ok(BetaSweep { start, end, step })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub k: Option<usize>,
    pub direction: Direction,
    pub transition1: Option<u32>,
    pub transition2: Option<u32>,
    pub stop_epoch: u32,
    pub final_f1: f64,
}

/// Runs one simulation per beta in parallel; rows come back in input order.
pub fn sweep_beta(
    counts: LevelCounts,
    k: Option<usize>,
    base: &SchedulerConfig,
    learner: &SyntheticLearnerConfig,
    betas: &[f64],
) -> Result<Vec<SweepRow>, SimError> {
    betas
        .par_iter()
        .map(|&beta| {
            let config = SchedulerConfig { beta, ..base.clone() };
            let report = simulate(counts, k, &config, learner)?;
            let t = report.transition_epochs();
            Ok(SweepRow {
                beta,
                k,
                direction: base.direction,
                transition1: t.first().copied(),
                transition2: t.get(1).copied(),
                stop_epoch: report.stop_epoch,
                final_f1: report.final_f1,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let opt = |v: Option<u32>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::from("beta,k,direction,transition1,transition2,stop_epoch,final_f1\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.beta,
            r.k.map(|k| k.to_string()).unwrap_or_default(),
            r.direction,
            opt(r.transition1),
            opt(r.transition2),
            r.stop_epoch,
            r.final_f1
        );
    }
    out
}
