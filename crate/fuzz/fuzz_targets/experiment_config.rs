#![no_main]

use libfuzzer_sys::fuzz_target;
use snspd_pnr::config::ExperimentConfig;

// Accepted configs are validated, so they must survive a round trip.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = ExperimentConfig::from_json(text) {
        let back = ExperimentConfig::from_json(&c.to_json().unwrap()).expect("canonical text parses");
        assert_eq!(back, c);
    }
});
