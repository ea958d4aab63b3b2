#![no_main]

use bellforge::tinynet::{mlp_from_text, mlp_to_text};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(net) = mlp_from_text(text) {
        assert_eq!(mlp_from_text(&mlp_to_text(&net)).unwrap(), net);
    }
});
