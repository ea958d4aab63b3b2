#![no_main]

use bellforge::correlations::{estimate_correlators, TrialBlock};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(block) = TrialBlock::read_csv(data) {
        // Anything that parses must write back and reparse to the same block.
        let mut out = Vec::new();
        block.write_csv(&mut out).unwrap();
        assert_eq!(TrialBlock::read_csv(out.as_slice()).unwrap(), block);
        if let Ok(c) = estimate_correlators(&block) {
            assert!(c.to_array().iter().all(|e| (-1.0..=1.0).contains(e)));
        }
    }
});
