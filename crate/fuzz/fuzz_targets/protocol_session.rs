#![no_main]

use libfuzzer_sys::fuzz_target;
use tacl_core::protocol::run_session;
use tacl_core::{LevelCounts, Scheduler, SchedulerConfig};

fuzz_target!(|data: &[u8]| {
    let counts = LevelCounts { easy: 2, medium: 0, hard: 5 };
    let config = SchedulerConfig { window_n: 3, total_epochs: 20, ..Default::default() };
    let mut scheduler = Scheduler::new(config, counts).unwrap();
    let mut out = Vec::new();
    let outcome = run_session(&mut scheduler, counts, None, data, &mut out).unwrap();
    // every reply is one JSON object per line
    for line in std::str::from_utf8(&out).unwrap().lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
    assert_eq!(outcome.stopped, scheduler.is_terminated());
});
