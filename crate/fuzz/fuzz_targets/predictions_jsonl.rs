#![no_main]

use libfuzzer_sys::fuzz_target;
use tacl_core::metrics::{evaluate, parse_predictions_jsonl, PredictionSet, TaskKind};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(records) = parse_predictions_jsonl(text) else { return };
    for task in [TaskKind::Binary, TaskKind::Multiclass, TaskKind::Multilabel] {
        if let Ok(set) = PredictionSet::new(task, &records, 0.5) {
            if let Ok(report) = evaluate(&set, Some(1)) {
                assert!((0.0..=1.0).contains(&report.macro_f1));
                assert!((0.0..=1.0).contains(&report.micro_f1));
            }
        }
    }
});
