#![no_main]

use bellforge::config::Config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = Config::from_toml(text) {
        // Compared as text: NaN fields are legal TOML and never equal themselves.
        let once = cfg.to_toml();
        assert_eq!(Config::from_toml(&once).unwrap().to_toml(), once);
        let _ = cfg.validate();
    }
});
