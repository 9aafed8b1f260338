#![no_main]

use libfuzzer_sys::fuzz_target;
use tacl_core::protocol::parse_trainer_line;

fuzz_target!(|data: &[u8]| {
    if let Ok(line) = std::str::from_utf8(data) {
        let _ = parse_trainer_line(line);
    }
});
