use std::process::Command;

use cbf_lab::experiments::{ExperimentConfig, Manifest};
use sha2::{Digest, Sha256};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cbf-lab"))
}

#[test]
fn tail_diagnostic_writes_manifest_with_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tail");
    let status = bin()
        .args(["tail-diagnostic", "--quiet", "--seed", "3", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest.pass);
    assert_eq!(manifest.seed, 3);
    assert_eq!(manifest.crate_version, env!("CARGO_PKG_VERSION"));
    for f in &manifest.files {
        let data = std::fs::read(out.join(&f.path)).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&data)), f.sha256, "{}", f.path);
    }
    let saved = ExperimentConfig::from_json(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(saved.hash().unwrap(), manifest.config_hash);
}

#[test]
fn print_config_round_trips_through_file() {
    let dir = tempfile::tempdir().unwrap();
    let printed = bin().args(["usc", "multiplicative", "--print-config", "--seed", "9"]).output().unwrap();
    assert!(printed.status.success());
    let text = String::from_utf8(printed.stdout).unwrap();
    let cfg = ExperimentConfig::from_json(&text).unwrap();
    assert_eq!(cfg.seed, 9);
    let path = dir.path().join("usc.json");
    std::fs::write(&path, &text).unwrap();
    let again = bin().args(["usc", "multiplicative", "--print-config", "--config"]).arg(&path).output().unwrap();
    assert_eq!(ExperimentConfig::from_json(&String::from_utf8(again.stdout).unwrap()).unwrap(), cfg);
}

#[test]
fn bad_configs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"experiment": "decay", "seed": 1, "schedule": {"dt": 0.0}}"#).unwrap();
    let out = bin().args(["decay", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schedule.dt"));

    std::fs::write(&path, r#"{"experiment": "absorb", "seed": 1}"#).unwrap();
    let out = bin().args(["decay", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
