#![no_main]

use bellforge::experiments::parse_strategy_reference;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_strategy_reference(data);
});
