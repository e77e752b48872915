#![no_main]

use issng::io::{read_history_csv, write_history_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_history_csv(data) {
        let mut out = Vec::new();
        write_history_csv(&mut out, &records).unwrap();
    }
});
