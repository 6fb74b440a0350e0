#![no_main]

use libfuzzer_sys::fuzz_target;
use snspd_pnr::io::{read_ground_truth, write_ground_truth};

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_ground_truth(data) {
        let mut buf = Vec::new();
        write_ground_truth(&mut buf, rows.iter().copied()).expect("rows serialize");
        assert_eq!(read_ground_truth(&buf[..]).unwrap(), rows);
    }
});
