#![no_main]

use libfuzzer_sys::fuzz_target;
use tacl_core::EmbeddingMatrix;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = EmbeddingMatrix::from_jsonl_str(text) {
        let canonical = m.to_jsonl_string();
        let again = EmbeddingMatrix::from_jsonl_str(&canonical).expect("canonical output parses");
        assert_eq!(again, m);
        assert_eq!(again.to_jsonl_string(), canonical);
    }
});
