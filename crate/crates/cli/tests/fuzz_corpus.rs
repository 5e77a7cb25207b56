//! The fuzzing seeds double as regression inputs: every one must be handled
//! without panicking, and the accepted ones must round-trip.

use std::fs;
use std::path::Path;

use hdg_nsdarcy::config::{format_polyline, parse_polyline};
use hdg_nsdarcy::RunConfig;

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, String)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn config_seeds() {
    let seeds = seeds("config_parser");
    assert!(seeds.len() >= 3);
    for (name, text) in seeds {
        match RunConfig::from_toml_str(&text) {
            Ok(cfg) => assert_eq!(RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg, "{name}"),
            Err(_) => assert!(name.starts_with("invalid"), "{name} should parse"),
        }
    }
}

#[test]
fn polyline_seeds() {
    for (name, text) in seeds("polyline_parser") {
        let valid = ["default", "flat", "spaced"].contains(&name.as_str());
        match parse_polyline(&text) {
            Ok(p) => {
                assert!(valid, "{name} should be rejected");
                assert_eq!(parse_polyline(&format_polyline(&p)).unwrap(), p);
            }
            Err(_) => assert!(!valid, "{name} should parse"),
        }
    }
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        RunConfig::from_toml_str(&fs::read_to_string(&p).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        n += 1;
    }
    assert!(n >= 5);
}
