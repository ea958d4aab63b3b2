//! Replays the checked-in fuzz corpus through the same invariants the fuzz
//! targets assert, so stable `cargo test` covers them too.

use std::path::PathBuf;

use bellforge::config::Config;
use bellforge::correlations::TrialBlock;
use bellforge::experiments::{parse_hardware_csv, parse_strategy_reference};
use bellforge::tinynet::{mlp_from_text, mlp_to_text};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut v: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    assert!(!v.is_empty(), "no seeds in {}", dir.display());
    v
}

#[test]
fn trial_csv_seeds() {
    let mut parsed = 0;
    for (name, data) in seeds("trial_csv") {
        if let Ok(block) = TrialBlock::read_csv(data.as_slice()) {
            let mut out = Vec::new();
            block.write_csv(&mut out).unwrap();
            assert_eq!(TrialBlock::read_csv(out.as_slice()).unwrap(), block, "{name}");
            parsed += 1;
        }
    }
    assert!(parsed > 0);
}

#[test]
fn hardware_csv_seeds() {
    let results: Vec<_> = seeds("hardware_csv").into_iter().map(|(n, d)| (n, parse_hardware_csv(d.as_slice()))).collect();
    assert!(results.iter().any(|r| r.1.is_ok()) && results.iter().any(|r| r.1.is_err()));
}

#[test]
fn weight_file_seeds() {
    for (name, data) in seeds("weight_file") {
        let text = String::from_utf8(data).unwrap();
        match (name.as_str(), mlp_from_text(&text)) {
            ("tiny.mlp", Ok(net)) => assert_eq!(mlp_from_text(&mlp_to_text(&net)).unwrap(), net),
            ("tiny.mlp", Err(e)) => panic!("{e}"),
            (_, r) => assert!(r.is_err(), "{name} parsed"),
        }
    }
}

#[test]
fn config_toml_seeds() {
    for (name, data) in seeds("config_toml") {
        let text = String::from_utf8(data).unwrap();
        if let Ok(cfg) = Config::from_toml(&text) {
            let once = cfg.to_toml();
            assert_eq!(Config::from_toml(&once).unwrap().to_toml(), once, "{name}");
        }
    }
}

#[test]
fn strategy_reference_seeds() {
    for (name, data) in seeds("strategy_reference") {
        let r = parse_strategy_reference(data.as_slice());
        assert_eq!(r.is_ok(), name == "bundled.csv", "{name}: {r:?}");
    }
}
