//! End-to-end runs of the binary on small meshes.

use std::fs;
use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

fn run(dir: &Path, command: &str, config: &str) -> (i32, String) {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hdg-nsdarcy"))
        .args([command, "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .env("HDG_NSDARCY_THREADS", "1")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

const SPATIAL: &str = r#"
command = "spatial_study"
k = 1
mu = 0.1
kappa = 1e-2
levels = [1, 2]

[time]
T = 0.05
N = 2
"#;

fn subsurface(seed: u64, vtk_every: usize) -> String {
    format!(
        r#"
command = "subsurface"
k = 1
mu = 0.1
kappa = "random({seed})"
levels = [4]
vtk_every = {vtk_every}
interface = "0,0; 0.25,-0.05; 0.75,0.05; 1,0"

[time]
T = 0.02
N = 2
"#
    )
}

#[test]
fn spatial_study_writes_tables_and_manifest() {
    let dir = TempDir::new().unwrap();
    let (code, err) = run(dir.path(), "spatial_study", SPATIAL);
    assert_eq!(code, 0, "{err}");
    let rates = read(dir.path(), "spatial_rates.csv");
    let lines: Vec<&str> = rates.lines().collect();
    assert_eq!(lines[0], "cells,h_max,dt,e_u_E,r_E,e_u_L2,r_u,e_p_L2,r_p");
    assert_eq!(lines.len(), 3);
    let rate_cells = |row: &str| row.split(',').enumerate().filter(|(i, _)| [4, 6, 8].contains(i)).map(|(_, c)| c.to_string()).collect::<Vec<_>>();
    assert!(rate_cells(lines[1]).iter().all(|c| c.is_empty()), "{}", lines[1]);
    assert!(rate_cells(lines[2]).iter().all(|c| c.parse::<f64>().is_ok()), "{}", lines[2]);
    let cons = read(dir.path(), "conservation.csv");
    assert_eq!(cons.lines().count(), 3);

    let manifest: serde_json::Value = serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["command"], "spatial_study");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["meshes"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["threads"], 1);
    assert_eq!(manifest["passed"], true);
    assert!(manifest["wall_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn single_level_temporal_study_has_no_rates() {
    let dir = TempDir::new().unwrap();
    let cfg = SPATIAL
        .replace("spatial_study", "temporal_study")
        .replace("levels = [1, 2]", "levels = [2]")
        .replace("N = 2", "N = [3]");
    let (code, err) = run(dir.path(), "temporal_study", &cfg);
    assert_eq!(code, 0, "{err}");
    let rates = read(dir.path(), "temporal_rates.csv");
    let row = rates.lines().nth(1).unwrap();
    let cols: Vec<&str> = row.split(',').collect();
    assert_eq!(cols.len(), 9);
    assert!(cols[4].is_empty() && cols[6].is_empty() && cols[8].is_empty());
    assert_eq!(cols[2], "1.667e-02");
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let (code, err) = run(dir.path(), "spatial_study", &SPATIAL.replace("k = 1", "k = 1\nmeshes = 3"));
    assert_eq!(code, 1);
    assert!(err.contains("meshes"), "{err}");
    let (code, _) = run(dir.path(), "temporal_study", SPATIAL);
    assert_eq!(code, 1, "command mismatch");
    let (code, _) = run(dir.path(), "spatial_study", &SPATIAL.replace("mu = 0.1", "mu = 0"));
    assert_eq!(code, 1);
    // Nothing is computed before validation passes.
    assert!(!dir.path().join("out").join("spatial_rates.csv").exists());
    let missing = Command::new(env!("CARGO_BIN_EXE_hdg-nsdarcy"))
        .args(["probe", "--config", "/nonexistent/run.toml"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn unrepresentable_interface_is_a_configuration_error() {
    let dir = TempDir::new().unwrap();
    let cfg = subsurface(1, 0).replace("0.25,-0.05", "0.5,0.4");
    let (code, err) = run(dir.path(), "subsurface", &cfg);
    assert_eq!(code, 1, "{err}");
}

#[test]
fn violated_rate_gate_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{SPATIAL}\n[gate]\nenergy_rate = [5.0, 6.0]\n");
    let (code, err) = run(dir.path(), "spatial_study", &cfg);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("energy rate"), "{err}");
    // The tables are still written.
    let manifest: serde_json::Value = serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["passed"], false);
}

#[test]
fn subsurface_is_deterministic_per_seed() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    for (dir, seed) in [(&a, 7), (&b, 7), (&c, 8)] {
        let (code, err) = run(dir.path(), "subsurface", &subsurface(seed, 0));
        assert_eq!(code, 0, "{err}");
    }
    let csv = read(a.path(), "mass_balance.csv");
    assert_eq!(csv, read(b.path(), "mass_balance.csv"));
    assert_ne!(csv, read(c.path(), "mass_balance.csv"));
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("step,time,div_s,div_d,normal_jump,interface_mismatch,flux_balance\n"));
    for row in csv.lines().skip(1) {
        for v in row.split(',').skip(2) {
            assert!(v.parse::<f64>().unwrap() <= 1e-9, "{row}");
        }
    }
    let vtk = fs::read_dir(a.path().join("out")).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "vtk")).count();
    assert_eq!(vtk, 0);
}

#[test]
fn subsurface_writes_snapshots_at_the_stride() {
    let dir = TempDir::new().unwrap();
    let (code, err) = run(dir.path(), "subsurface", &subsurface(3, 2));
    assert_eq!(code, 0, "{err}");
    let out = dir.path().join("out");
    assert!(out.join("snapshot_000000.vtk").exists());
    assert!(!out.join("snapshot_000001.vtk").exists());
    assert!(out.join("snapshot_000002.vtk").exists());
    let text = fs::read_to_string(out.join("snapshot_000002.vtk")).unwrap();
    for key in ["VECTORS velocity double", "SCALARS speed", "SCALARS pressure", "SCALARS permeability"] {
        assert!(text.contains(key), "{key}");
    }
}

#[test]
fn probe_and_invariants_pass_on_small_meshes() {
    let dir = TempDir::new().unwrap();
    let probe = SPATIAL.replace("spatial_study", "probe");
    let (code, err) = run(dir.path(), "probe", &probe);
    assert_eq!(code, 0, "{err}");
    let csv = read(dir.path(), "probe.csv");
    assert_eq!(csv.lines().next(), Some("ny,cells,infsup,coercivity_min"));
    assert_eq!(csv.lines().count(), 3);

    let dir = TempDir::new().unwrap();
    let inv = SPATIAL.replace("spatial_study", "invariants").replace("levels = [1, 2]", "levels = [1, 2, 4]");
    let (code, err) = run(dir.path(), "invariants", &inv);
    assert_eq!(code, 0, "{err}");
    let csv = read(dir.path(), "invariants.csv");
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")), "{csv}");
}

#[test]
fn oversized_probe_is_rejected() {
    let dir = TempDir::new().unwrap();
    let probe = SPATIAL.replace("spatial_study", "probe").replace("levels = [1, 2]", "levels = [32]");
    let (code, _) = run(dir.path(), "probe", &probe);
    assert_eq!(code, 1);
}
