#![no_main]

use libfuzzer_sys::fuzz_target;
use lrpi_core::io::parse_coverage_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(c) = parse_coverage_config(text) {
        c.validate().unwrap();
    }
});
