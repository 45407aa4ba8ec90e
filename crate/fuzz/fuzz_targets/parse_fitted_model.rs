#![no_main]

use libfuzzer_sys::fuzz_target;
use lrpi_core::families::log_density;
use lrpi_core::io::{parse_fitted_model, to_json, FittedModelJson};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = parse_fitted_model(text) {
        // accepted models evaluate and survive a write/read cycle
        let _ = log_density(&m.spec, &m.params, 1.0);
        let again = parse_fitted_model(&to_json(&FittedModelJson::from(&m)).unwrap()).unwrap();
        assert_eq!(again.params, m.params);
    }
});
