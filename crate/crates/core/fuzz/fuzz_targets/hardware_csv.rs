#![no_main]

use bellforge::experiments::parse_hardware_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = parse_hardware_csv(data) {
        assert!(c.to_array().iter().all(|e| e.abs() <= 1.0));
    }
});
