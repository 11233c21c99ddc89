use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use lfc_cli::{parse_config, sha256_hex, RunConfig};

fn lfc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfc"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, json: &str) -> String {
    let p = dir.join("config_in.json");
    std::fs::write(&p, json).unwrap();
    p.to_string_lossy().into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn gains(gamma: &str) -> String {
    format!(r#"{{"design": {{"gains": [{{"gamma": {gamma}, "tau": 1, "k_b0": 10}}, {{"gamma": {gamma}, "tau": 1, "k_b0": 10}}]}}}}"#)
}

#[test]
fn design_writes_both_controllers_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = lfc(dir.path(), &["design"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("area 1") && stdout.contains("stable"));
    for f in ["controller_area1.json", "controller_area2.json", "config.json"] {
        let v: serde_json::Value = serde_json::from_str(&read(dir.path(), f)).unwrap();
        assert!(v.is_object());
    }
    let c1: serde_json::Value = serde_json::from_str(&read(dir.path(), "controller_area1.json")).unwrap();
    assert_eq!(c1["verdict"], "stable");

    let manifest: serde_json::Value = serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["command"], "design");
    let files: BTreeMap<String, String> = serde_json::from_value(manifest["files"].clone()).unwrap();
    assert_eq!(files.len(), 3);
    for (name, hash) in &files {
        assert_eq!(&sha256_hex(read(dir.path(), name).as_bytes()), hash, "{name}");
    }
    assert_eq!(manifest["config_sha256"], sha256_hex(read(dir.path(), "config.json").as_bytes()));
}

#[test]
fn missing_field_exits_2_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"design": {"gains": [{"gamma": [2,2,2,2,2], "k_b0": 10}, {"gamma": [2,2,2,2,2], "tau": 1, "k_b0": 10}]}}"#);
    let o = lfc(dir.path(), &["design", "--config", &cfg]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("design.gains[0]") && err.contains("tau"), "{err}");
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn malformed_or_invalid_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for bad in ["{not json", r#"{"seed": -1}"#, r#"{"scenario": {"kind": "case", "id": 9}}"#, &gains("[2,2,-1,2,2]")] {
        let cfg = write_config(dir.path(), bad);
        assert_eq!(code(&lfc(dir.path(), &["design", "--config", &cfg])), 2, "{bad}");
    }
    assert_eq!(code(&lfc(dir.path(), &["simulate", "--dt", "0.2"])), 2);
    assert_eq!(code(&lfc(dir.path(), &["design", "--config", "/nonexistent/x.json"])), 2);
}

#[test]
fn unstable_design_exits_3_unless_allowed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &gains("[1,1,1,1,1]"));
    let o = lfc(dir.path(), &["design", "--config", &cfg]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("unstable"));
    // The controllers are still written for inspection.
    let c1: serde_json::Value = serde_json::from_str(&read(dir.path(), "controller_area1.json")).unwrap();
    assert_eq!(c1["verdict"], "unstable");
    assert_eq!(code(&lfc(dir.path(), &["design", "--config", &cfg, "--allow-unstable"])), 0);
}

#[test]
fn diverging_simulation_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"areas": [{"D": 0.015, "M": 0.1667, "R": 3.0, "Tg": 0.08, "Tt": 0.4},
                                 {"D": 0.016, "M": 0.2017, "R": 2.73, "Tg": 0.06, "Tt": 0.44}],
                       "tie": {"T12": 0.2},
                       "nonlin": {"grc_rate": null, "gdb_width": 0.0, "gdb_model": {"kind": "static"}}},
            "controllers": [{"source": "explicit", "name": "bad",
                             "areas": [{"kind": "integral", "ki": -5}, {"kind": "integral", "ki": -5}]}],
            "sweep": {"controllers": []},
            "solver": {"horizon": 200}}"#,
    );
    let o = lfc(dir.path(), &["simulate", "--config", &cfg]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
}

#[test]
fn case2_trajectory_spans_the_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let o = lfc(dir.path(), &["case", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = read(dir.path(), "case2_trajectory_cdm_opt.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,df1,df2,dptie,ace1,ace2,u1,u2,dpl1,dpl2");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6001);
    assert!(rows.last().unwrap().starts_with("6.00000000e1,"));
    for name in ["pid", "cdm", "pi"] {
        assert!(dir.path().join(format!("case2_trajectory_{name}.csv")).exists());
    }
    let report = read(dir.path(), "case2_report.csv");
    assert_eq!(report.lines().count(), 5);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let snapshot = || -> BTreeMap<String, String> {
        assert_eq!(code(&lfc(dir.path(), &["case", "4", "--seed", "7"])), 0);
        let manifest = read(dir.path(), "manifest.json");
        let files: BTreeMap<String, String> =
            serde_json::from_value(serde_json::from_str::<serde_json::Value>(&manifest).unwrap()["files"].clone()).unwrap();
        let mut all: BTreeMap<String, String> = files.keys().map(|n| (n.clone(), read(dir.path(), n))).collect();
        all.insert("manifest.json".into(), manifest);
        all
    };
    let first = snapshot();
    assert!(first.len() > 5);
    assert_eq!(first, snapshot());
}

#[test]
fn sweep_has_seventeen_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = lfc(dir.path(), &["sweep"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = read(dir.path(), "sweep.csv");
    assert_eq!(csv.lines().count(), 18);
    assert!(csv.lines().nth(1).unwrap().starts_with("nominal,"));
    // Case 6 is the same sweep under its own prefix.
    assert_eq!(code(&lfc(dir.path(), &["case", "6"])), 0);
    assert_eq!(read(dir.path(), "case6_sweep.csv"), csv);
}

#[test]
fn small_optimization_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"optimizer": {"n_pop": 8, "max_it": 3, "n_sr": 2}}"#);
    let o = lfc(dir.path(), &["optimize", "--config", &cfg, "--repeats", "2", "--seed", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let conv = read(dir.path(), "convergence.csv");
    assert_eq!(conv.lines().next().unwrap(), "iteration,run_1,run_2");
    assert_eq!(conv.lines().count(), 4);
    let summary = read(dir.path(), "summary.csv");
    let stats: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(stats, ["min", "max", "average", "std"]);
    let s: serde_json::Value = serde_json::from_str(&read(dir.path(), "summary.json")).unwrap();
    assert_eq!(s["repeats"][1]["seed"], 5);
    let best: serde_json::Value = serde_json::from_str(&read(dir.path(), "best.json")).unwrap();
    assert_eq!(best["decision"].as_array().unwrap().len(), 8);
}

#[test]
fn config_prints_the_effective_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let o = lfc(dir.path(), &["config", "--seed", "9"]);
    assert_eq!(code(&o), 0);
    let cfg = parse_config(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.optimizer, RunConfig::default().optimizer);
}

#[test]
fn bundled_default_config_matches_the_built_in_defaults() {
    let text = include_str!("../../../configs/default.json");
    let mut want = RunConfig::default();
    want.output = "out".into();
    assert_eq!(parse_config(text).unwrap(), want);
}
