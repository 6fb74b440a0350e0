#![no_main]

use libfuzzer_sys::fuzz_target;
use snspd_pnr::io::{decode_waveforms, encode_waveforms};

// Whatever decodes must re-encode to the same bytes.
fuzz_target!(|data: &[u8]| {
    if let Ok((header, events)) = decode_waveforms(data) {
        let again = encode_waveforms(header.sample_rate_hz, header.record_length, header.counts, &events)
            .expect("decoded records re-encode");
        assert_eq!(decode_waveforms(&again).unwrap().1, events);
    }
});
