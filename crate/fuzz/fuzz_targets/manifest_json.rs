#![no_main]

use libfuzzer_sys::fuzz_target;
use tacl_core::{CurriculumManifest, Scheduler, SchedulerConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(manifest) = serde_json::from_slice::<CurriculumManifest>(data) else { return };
    if manifest.validate().is_ok() {
        let text = serde_json::to_string(&manifest).unwrap();
        let back: CurriculumManifest = serde_json::from_str(&text).unwrap();
        assert!(back.validate().is_ok());
        let _ = Scheduler::new(SchedulerConfig::default(), manifest.level_counts);
    }
});
