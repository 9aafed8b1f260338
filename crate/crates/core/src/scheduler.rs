//! Threshold-adaptive stage scheduler.
//!
//! The scheduler consumes one macro-F1 value per epoch and decides whether
//! the trainer should keep its current pool, expand it to the next difficulty
//! level, or stop. Growth is measured over a sliding window of the last `N`
//! values:
//!
//! ```text
//! gamma_bar   = (1 / (N - 1)) * sum_{t=2..N} (F_t - F_{t-1})
//! gamma_delta = F_N - F_{N-1}
//! saturated  <=> gamma_delta < beta * gamma_bar
//! ```
//!
//! Saturation is only evaluated once the window holds `N` values. At a
//! non-final stage saturation expands the pool; at the final stage it stops
//! the run, as does `patience` epochs without a new best macro-F1. The epoch
//! budget stops the run regardless of stage.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::difficulty::{DifficultyLevel, LevelCounts};

#[derive(Debug, Error, PartialEq)]
pub enum SchedulerError {
    #[error("WindowNotFull: need {needed} values, have {have}")]
    WindowNotFull { needed: usize, have: usize },
    #[error("WindowTooShort: need at least 2 values, have {0}")]
    WindowTooShort(usize),
    #[error("AlreadyTerminated: the run stopped at epoch {epoch} ({reason})")]
    AlreadyTerminated { epoch: u32, reason: StopReason },
    #[error("InvalidMetric: macro-F1 must be a finite value in [0, 1], got {0}")]
    InvalidMetric(f64),
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
}

type Result<T, E = SchedulerError> = std::result::Result<T, E>;

/// Curriculum direction: easy to hard, or the reversed ablation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Forward,
    Reversed,
}

impl Direction {
    /// Order in which levels join the training pool.
    pub fn level_order(self) -> [DifficultyLevel; 3] {
        use DifficultyLevel::*;
        match self {
            Direction::Forward => [Easy, Medium, Hard],
            Direction::Reversed => [Hard, Medium, Easy],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Reversed => "reversed",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "forward" => Ok(Direction::Forward),
            "reversed" | "reverse" => Ok(Direction::Reversed),
            other => Err(format!("unknown direction {other:?} (expected forward|reversed)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    /// Sliding window size `N`.
    pub window_n: usize,
    /// Threshold coefficient, strictly inside (0, 1).
    pub beta: f64,
    /// Epoch budget `E`.
    pub total_epochs: u32,
    /// Final-stage epochs without a new best macro-F1 before stopping.
    pub patience: u32,
    pub direction: Direction,
    /// Clear the window whenever the pool expands.
    pub reset_window_on_transition: bool,
    /// Treat a full window with `gamma_bar <= 0` as saturated.
    pub stagnation_as_saturation: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            window_n: 5,
            beta: 0.7,
            total_epochs: 30,
            patience: 5,
            direction: Direction::Forward,
            reset_window_on_transition: false,
            stagnation_as_saturation: true,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SchedulerError::InvalidConfig(m));
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if self.window_n < 2 {
            return bad(format!("window size must be at least 2, got {}", self.window_n));
        }
        if self.total_epochs < 1 {
            return bad("total_epochs must be at least 1".into());
        }
        if self.patience < 1 {
            return bad("patience must be at least 1".into());
        }
        Ok(())
    }
}

/// Mean of successive differences over the window, summed term by term.
pub fn average_growth_rate(window: &[f64]) -> Result<f64> {
    if window.len() < 2 {
        return Err(SchedulerError::WindowNotFull { needed: 2, have: window.len() });
    }
    let sum: f64 = window.windows(2).map(|w| w[1] - w[0]).sum();
    Ok(sum / (window.len() - 1) as f64)
}

/// Last difference of the window.
pub fn instantaneous_growth_rate(window: &[f64]) -> Result<f64> {
    match window {
        [.., prev, last] => Ok(last - prev),
        _ => Err(SchedulerError::WindowTooShort(window.len())),
    }
}

pub fn is_saturated(gamma_delta: f64, gamma_bar: f64, beta: f64, stagnation_as_saturation: bool) -> bool {
    gamma_delta < beta * gamma_bar || (stagnation_as_saturation && gamma_bar <= 0.0)
}

/// Bounded FIFO of the most recent macro-F1 values.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthTracker {
    capacity: usize,
    window: VecDeque<f64>,
}

impl GrowthTracker {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, window: VecDeque::with_capacity(capacity + 1) }
    }

    pub fn push(&mut self, value: f64) {
        self.window.push_back(value);
        if self.window.len() > self.capacity {
            self.window.pop_front();
        }
    }

    pub fn is_full(&self) -> bool {
        self.window.len() == self.capacity
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn clear(&mut self) {
        self.window.clear();
    }

    pub fn values(&self) -> Vec<f64> {
        self.window.iter().copied().collect()
    }

    fn full_window(&self) -> Result<Vec<f64>> {
        if !self.is_full() {
            return Err(SchedulerError::WindowNotFull { needed: self.capacity, have: self.window.len() });
        }
        Ok(self.values())
    }

    pub fn average_growth_rate(&self) -> Result<f64> {
        average_growth_rate(&self.full_window()?)
    }

    pub fn instantaneous_growth_rate(&self) -> Result<f64> {
        instantaneous_growth_rate(&self.full_window()?)
    }
}

/// A training pool: the first `depth` levels of the direction's order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stage {
    pub direction: Direction,
    pub depth: usize,
}

impl Stage {
    pub fn active_levels(&self) -> Vec<DifficultyLevel> {
        self.direction.level_order()[..self.depth].to_vec()
    }

    pub fn name(&self) -> &'static str {
        match (self.direction, self.depth) {
            (_, 3) => "full",
            (Direction::Forward, 1) => "easy",
            (Direction::Forward, _) => "easy_medium",
            (Direction::Reversed, 1) => "hard",
            (Direction::Reversed, _) => "hard_medium",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Stage {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Continue,
    Advance,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Saturated,
    PatienceExhausted,
    EpochBudget,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Saturated => "saturated",
            StopReason::PatienceExhausted => "patience_exhausted",
            StopReason::EpochBudget => "epoch_budget",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub gamma_bar: Option<f64>,
    pub gamma_delta: Option<f64>,
    pub threshold: Option<f64>,
    pub window_full: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchedulerDecision {
    /// Epoch whose macro-F1 produced this decision (1-based).
    pub epoch: u32,
    pub action: Action,
    /// Pool for the next epoch.
    pub active_levels: Vec<DifficultyLevel>,
    pub stage: Stage,
    pub diagnostics: Diagnostics,
    pub stop_reason: Option<StopReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transition {
    pub epoch: u32,
    pub from: Stage,
    pub to: Stage,
    pub gamma_bar: f64,
    pub gamma_delta: f64,
    pub threshold: f64,
}

/// Audit-log line; transitions in order, then the stop.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AuditEvent {
    Advance(Transition),
    Stop { epoch: u32, stage: Stage, reason: StopReason },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerState {
    pub stage_index: usize,
    pub epoch: u32,
    pub tracker: GrowthTracker,
    pub best_f1: Option<f64>,
    pub epochs_since_improvement: u32,
    pub transitions: Vec<Transition>,
    pub terminated: Option<(u32, StopReason)>,
}

/// Single-owner state machine; feed it one macro-F1 per epoch.
#[derive(Debug, Clone)]
pub struct Scheduler {
    config: SchedulerConfig,
    plan: Vec<Stage>,
    state: SchedulerState,
}

impl Scheduler {
    /// Builds a scheduler whose stage plan skips levels with no samples.
    pub fn new(config: SchedulerConfig, counts: LevelCounts) -> Result<Self> {
        config.validate()?;
        let order = config.direction.level_order();
        let plan: Vec<Stage> = (1..=3)
            .filter(|&depth| counts.get(order[depth - 1]) > 0)
            .map(|depth| Stage { direction: config.direction, depth })
            .collect();
        if plan.is_empty() {
            return Err(SchedulerError::InvalidConfig("every difficulty level is empty".into()));
        }
        Ok(Self {
            state: SchedulerState {
                stage_index: 0,
                epoch: 0,
                tracker: GrowthTracker::new(config.window_n),
                best_f1: None,
                epochs_since_improvement: 0,
                transitions: Vec::new(),
                terminated: None,
            },
            config,
            plan,
        })
    }

    /// Scheduler over a curriculum in which every level is populated.
    pub fn with_all_levels(config: SchedulerConfig) -> Result<Self> {
        Self::new(config, LevelCounts { easy: 1, medium: 1, hard: 1 })
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    pub fn state(&self) -> &SchedulerState {
        &self.state
    }

    pub fn plan(&self) -> &[Stage] {
        &self.plan
    }

    pub fn stage(&self) -> Stage {
        self.plan[self.state.stage_index]
    }

    pub fn active_levels(&self) -> Vec<DifficultyLevel> {
        self.stage().active_levels()
    }

    pub fn is_terminated(&self) -> bool {
        self.state.terminated.is_some()
    }

    fn at_final_stage(&self) -> bool {
        self.state.stage_index + 1 == self.plan.len()
    }

    pub fn observe_epoch(&mut self, macro_f1: f64) -> Result<SchedulerDecision> {
        if let Some((epoch, reason)) = self.state.terminated {
            return Err(SchedulerError::AlreadyTerminated { epoch, reason });
        }
        if !(macro_f1.is_finite() && (0.0..=1.0).contains(&macro_f1)) {
            return Err(SchedulerError::InvalidMetric(macro_f1));
        }

        let st = &mut self.state;
        st.epoch += 1;
        let epoch = st.epoch;
        st.tracker.push(macro_f1);
        if st.best_f1.is_none_or(|best| macro_f1 > best) {
            st.best_f1 = Some(macro_f1);
            st.epochs_since_improvement = 0;
        } else {
            st.epochs_since_improvement += 1;
        }

        let mut diagnostics = Diagnostics { window_full: st.tracker.is_full(), ..Diagnostics::default() };
        let mut saturated = false;
        if diagnostics.window_full {
            let gamma_bar = st.tracker.average_growth_rate()?;
            let gamma_delta = st.tracker.instantaneous_growth_rate()?;
            let threshold = self.config.beta * gamma_bar;
            saturated = is_saturated(gamma_delta, gamma_bar, self.config.beta, self.config.stagnation_as_saturation);
            diagnostics.gamma_bar = Some(gamma_bar);
            diagnostics.gamma_delta = Some(gamma_delta);
            diagnostics.threshold = Some(threshold);
        }

        let is_final = self.at_final_stage();
        let last_epoch = epoch >= self.config.total_epochs;
        let (action, stop_reason) = if saturated && is_final {
            (Action::Stop, Some(StopReason::Saturated))
        } else if saturated && !last_epoch {
            (Action::Advance, None)
        } else if is_final && self.state.epochs_since_improvement >= self.config.patience {
            (Action::Stop, Some(StopReason::PatienceExhausted))
        } else if last_epoch {
            (Action::Stop, Some(StopReason::EpochBudget))
        } else {
            (Action::Continue, None)
        };

        match action {
            Action::Advance => {
                let from = self.stage();
                self.state.stage_index += 1;
                let to = self.stage();
                self.state.transitions.push(Transition {
                    epoch,
                    from,
                    to,
                    gamma_bar: diagnostics.gamma_bar.expect("saturation implies a full window"),
                    gamma_delta: diagnostics.gamma_delta.expect("saturation implies a full window"),
                    threshold: diagnostics.threshold.expect("saturation implies a full window"),
                });
                if self.config.reset_window_on_transition {
                    self.state.tracker.clear();
                }
                self.state.best_f1 = None;
                self.state.epochs_since_improvement = 0;
                log::info!("epoch {epoch}: advance {from} -> {to}");
            }
            Action::Stop => {
                let reason = stop_reason.expect("stop carries a reason");
                self.state.terminated = Some((epoch, reason));
                log::info!("epoch {epoch}: stop ({reason})");
            }
            Action::Continue => {}
        }

        Ok(SchedulerDecision {
            epoch,
            action,
            active_levels: self.active_levels(),
            stage: self.stage(),
            diagnostics,
            stop_reason,
        })
    }

    /// Transitions followed by the stop event, if the run has ended.
    pub fn audit_events(&self) -> Vec<AuditEvent> {
        let mut events: Vec<AuditEvent> = self.state.transitions.iter().cloned().map(AuditEvent::Advance).collect();
        if let Some((epoch, reason)) = self.state.terminated {
            events.push(AuditEvent::Stop { epoch, stage: self.stage(), reason });
        }
        events
    }

    /// The audit log as JSON lines.
    pub fn audit_jsonl(&self) -> String {
        self.audit_events().iter().map(|e| serde_json::to_string(e).expect("audit event serializes") + "\n").collect()
    }
}
