#![no_main]

use libfuzzer_sys::fuzz_target;
use lrpi_core::io::parse_dataset;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(values) = parse_dataset(text) {
            assert!(!values.is_empty());
            assert!(values.iter().all(|v| v.is_finite()));
        }
    }
});
