#![no_main]

use libfuzzer_sys::fuzz_target;
use lrpi_core::io::parse_censored_envelope;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(s) = parse_censored_envelope(text, None) {
        assert!(s.failure_times.len() <= s.n);
        assert!(s.failure_times.windows(2).all(|w| w[0] <= w[1]));
        assert!(s.failure_times.iter().all(|&t| t > 0.0 && t <= s.t_c));
    }
});
