#![no_main]

use libfuzzer_sys::fuzz_target;
use tacl_core::EmbeddingMatrix;

fuzz_target!(|data: &[u8]| {
    // anything accepted must re-encode to the same bytes
    if let Ok(m) = EmbeddingMatrix::from_binary_bytes(data) {
        assert_eq!(m.to_binary_bytes(), data);
    }
});
