#![no_main]

use libfuzzer_sys::fuzz_target;
use snspd_pnr::pipeline::ReconstructionReport;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = ReconstructionReport::from_json(text) {
        let back = ReconstructionReport::from_json(&r.to_json().unwrap()).expect("canonical text parses");
        assert_eq!(back, r);
    }
});
