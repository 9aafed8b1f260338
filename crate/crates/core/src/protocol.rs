//! Line-delimited JSON step protocol between a trainer and the scheduler.
//!
//! The scheduler side speaks first with a `hello` line, then answers every
//! `epoch_result` line with exactly one `decision` (or `error`) line:
//!
//! ```text
//! <- {"type":"hello","manifest_counts":{"easy":..,"medium":..,"hard":..},"manifest_hash":"..","config":{..}}
//! -> {"type":"epoch_result","epoch":1,"macro_f1":0.41}
//! <- {"type":"decision","action":"continue","active_levels":["easy"],"stage":"easy",
//!     "gamma_bar":null,"gamma_delta":null,"threshold":null,"stop_reason":null}
//! ```
//!
//! Malformed or out-of-order lines get an `error` reply and the session
//! continues. The session ends after the `stop` decision or at end of input.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::difficulty::{DifficultyLevel, LevelCounts};
use crate::scheduler::{Action, Scheduler, SchedulerConfig, SchedulerDecision, StopReason};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrainerMessage {
    EpochResult { epoch: u32, macro_f1: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SchedulerMessage {
    Hello {
        manifest_counts: LevelCounts,
        /// Provenance hash of the manifest the session was opened with.
        manifest_hash: Option<String>,
        config: SchedulerConfig,
    },
    Decision {
        action: Action,
        active_levels: Vec<DifficultyLevel>,
        stage: String,
        gamma_bar: Option<f64>,
        gamma_delta: Option<f64>,
        threshold: Option<f64>,
        stop_reason: Option<StopReason>,
    },
    Error {
        message: String,
    },
}

impl From<&SchedulerDecision> for SchedulerMessage {
    fn from(d: &SchedulerDecision) -> Self {
        SchedulerMessage::Decision {
            action: d.action,
            active_levels: d.active_levels.clone(),
            stage: d.stage.name().to_owned(),
            gamma_bar: d.diagnostics.gamma_bar,
            gamma_delta: d.diagnostics.gamma_delta,
            threshold: d.diagnostics.threshold,
            stop_reason: d.stop_reason,
        }
    }
}

pub fn parse_trainer_line(line: &str) -> Result<TrainerMessage, serde_json::Error> {
    serde_json::from_str(line)
}

fn write_message<W: Write>(out: &mut W, msg: &SchedulerMessage) -> io::Result<()> {
    let line = serde_json::to_string(msg).map_err(io::Error::other)?;
    out.write_all(line.as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub decisions: Vec<SchedulerDecision>,
    pub errors: usize,
    /// False when input ended before a stop decision.
    pub stopped: bool,
}

/// Runs one protocol session to completion.
pub fn run_session<R: BufRead, W: Write>(
    scheduler: &mut Scheduler,
    manifest_counts: LevelCounts,
    manifest_hash: Option<&str>,
    input: R,
    output: &mut W,
) -> io::Result<SessionOutcome> {
    write_message(
        output,
        &SchedulerMessage::Hello {
            manifest_counts,
            manifest_hash: manifest_hash.map(str::to_owned),
            config: scheduler.config().clone(),
        },
    )?;
    let mut outcome = SessionOutcome { decisions: Vec::new(), errors: 0, stopped: false };
    for line in input.lines() {
        let line = match line {
            Ok(line) => line,
            Err(e) if e.kind() == io::ErrorKind::InvalidData => {
                outcome.errors += 1;
                write_message(output, &SchedulerMessage::Error { message: format!("MalformedMessage: {e}") })?;
                continue;
            }
            Err(e) => return Err(e),
        };
        if line.trim().is_empty() {
            continue;
        }
        let reply = match parse_trainer_line(&line) {
            Err(e) => Err(format!("MalformedMessage: {e}")),
            Ok(TrainerMessage::EpochResult { epoch, macro_f1 }) => {
                let expected = scheduler.state().epoch + 1;
                if epoch != expected {
                    Err(format!("EpochOutOfOrder: expected epoch {expected}, got {epoch}"))
                } else {
                    scheduler.observe_epoch(macro_f1).map_err(|e| e.to_string())
                }
            }
        };
        match reply {
            Ok(decision) => {
                write_message(output, &SchedulerMessage::from(&decision))?;
                let stop = decision.action == Action::Stop;
                outcome.decisions.push(decision);
                if stop {
                    outcome.stopped = true;
                    break;
                }
            }
            Err(message) => {
                log::warn!("{message}");
                outcome.errors += 1;
                write_message(output, &SchedulerMessage::Error { message })?;
            }
        }
    }
    Ok(outcome)
}
