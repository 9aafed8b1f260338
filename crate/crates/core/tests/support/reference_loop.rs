// Straight-line reference for the stage scheduler, written from the
// pseudocode without touching the library's scheduler types. Shared by the
// integration tests and the acceptance harness.

#![allow(dead_code)]

#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub n: usize,
    pub beta: f64,
    pub epochs: u32,
    pub patience: u32,
    pub reversed: bool,
    pub reset: bool,
    pub stagnation: bool,
    /// Samples per level as (easy, medium, hard).
    pub counts: [usize; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Advance { epoch: u32, levels: Vec<&'static str> },
    Stop { epoch: u32, reason: &'static str },
}

/// Runs the loop. `f1(epoch, stage, epochs_in_stage)` plays the trainer:
/// `stage` indexes the non-empty stages (0 = first pool) and
/// `epochs_in_stage` counts from 1.
pub fn run(cfg: &OracleConfig, mut f1: impl FnMut(u32, usize, u32) -> f64) -> Vec<Event> {
    let names = ["easy", "medium", "hard"];
    let order: [usize; 3] = if cfg.reversed { [2, 1, 0] } else { [0, 1, 2] };

    // D_1 .. D_3 with empty levels skipped
    let mut pools: Vec<Vec<&'static str>> = Vec::new();
    let mut pool: Vec<&'static str> = Vec::new();
    for &lvl in &order {
        pool.push(names[lvl]);
        if cfg.counts[lvl] > 0 {
            pools.push(pool.clone());
        }
    }
    assert!(!pools.is_empty());

    let mut events = Vec::new();
    let mut window: Vec<f64> = Vec::new();
    let mut stage = 0usize;
    let mut in_stage = 0u32;
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0u32;

    for t in 1..=cfg.epochs {
        in_stage += 1;
        let f = f1(t, stage, in_stage);

        window.push(f);
        if window.len() > cfg.n {
            window.remove(0);
        }

        if f > best {
            best = f;
            stale = 0;
        } else {
            stale += 1;
        }

        let last_stage = stage == pools.len() - 1;
        let mut saturated = false;
        if window.len() == cfg.n {
            let mut sum = 0.0;
            for i in 1..cfg.n {
                sum += window[i] - window[i - 1];
            }
            let avg = sum / (cfg.n - 1) as f64;
            let inst = window[cfg.n - 1] - window[cfg.n - 2];
            saturated = inst < cfg.beta * avg || (cfg.stagnation && avg <= 0.0);
        }

        if saturated && last_stage {
            events.push(Event::Stop { epoch: t, reason: "saturated" });
            return events;
        }
        // one decision per epoch: expanding on the last epoch would never be
        // trained on, so the budget stop wins there
        if saturated && t < cfg.epochs {
            stage += 1;
            in_stage = 0;
            best = f64::NEG_INFINITY;
            stale = 0;
            if cfg.reset {
                window.clear();
            }
            events.push(Event::Advance { epoch: t, levels: pools[stage].clone() });
            continue;
        }
        if last_stage && stale >= cfg.patience {
            events.push(Event::Stop { epoch: t, reason: "patience_exhausted" });
            return events;
        }
    }
    events.push(Event::Stop { epoch: cfg.epochs, reason: "epoch_budget" });
    events
}
