use std::path::Path;
use std::process::Command;

use cellfree::config::ExperimentConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cellfree"))
}

fn profile(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

#[test]
fn shipped_profiles_match_builtin_defaults() {
    assert_eq!(ExperimentConfig::load(&profile("paper.toml")).unwrap(), ExperimentConfig::default());
    assert_eq!(ExperimentConfig::load(&profile("desk.toml")).unwrap(), ExperimentConfig::desk());
}

#[test]
fn validate_reports_a_broken_frame() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[frame]\ntau_u = 100\ntau_d = 100\n").unwrap();
    let out = bin().args(["validate", "--config"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("frame split violated"));

    let ok = bin().args(["validate", "--config"]).arg(profile("paper.toml")).output().unwrap();
    assert!(ok.status.success());
    assert_eq!(String::from_utf8_lossy(&ok.stdout).trim(), "[]");
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(
        &cfg,
        "[network]\nnum_aps = 9\nnum_ues = 3\narea_side_m = 300.0\nantennas_per_ap = 1\n[frame]\ntau_p = 3\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", "--seed", "3", "--budget", "50", "--drops", "2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("se.csv")).unwrap();
    assert!(csv.starts_with("drop_id,ue_id,scheme,bound,link,se_bits_per_hz,stderr,cluster_size,pilot_id\n"));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["metadata"]["drops"], 2);
    assert_eq!(summary["metadata"]["seed"], 3);
    assert_eq!(summary["metadata"]["genie_interference"], "instantaneous");
}

#[test]
fn fig2_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let s = bin().args(["fig2", "--seed", "4", "--budget", "20000", "--out"]).arg(&out).status().unwrap();
        assert!(s.success());
        std::fs::read(out.join("fig2_hist.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn unreadable_config_is_an_error() {
    let out = bin().args(["run", "--config", "/nonexistent/cfg.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
