use std::path::Path;
use std::process::{Command, Output};

fn regretlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regretlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn help_and_version_exit_zero() {
    let out = regretlab(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["synth", "worstcase", "regret", "sweep", "reproduce-fig1"] {
        assert!(text.contains(cmd), "help lacks {cmd}");
    }
    assert!(regretlab(&["--version"]).status.success());
}

#[test]
fn synth_reports_gamma_levels() {
    let out = regretlab(&["synth", "--horizon", "100"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let lower = report["gamma_lower"].as_f64().unwrap();
    let bar = report["gamma_bar"].as_f64().unwrap();
    assert!(lower < bar);
    assert!((report["worst_case_energy"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(report["gains"].as_array().unwrap().len(), 100);
}

#[test]
fn regret_at_worst_case_is_zero() {
    let out = regretlab(&["regret", "--controller", "hinf", "--horizon", "100", "--gap", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let regret = report["regret"].as_f64().unwrap();
    let cost = report["policy_cost"].as_f64().unwrap();
    assert!(regret.abs() <= 1e-6 * (1.0 + cost));
}

#[test]
fn inadmissible_state_exits_with_infeasibility_code() {
    let dir = tempfile::tempdir().unwrap();
    let system = write(
        dir.path(),
        "system.json",
        r#"{"A": [[1.0]], "B": [[1.0]], "x0": [0.0], "Q": [[1.0]], "R": [[1.0]]}"#,
    );
    let out = regretlab(&["synth", "--config", &system, "--horizon", "10"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not admissible"));
}

#[test]
fn malformed_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "bad.json", r#"{"horizon": 10, "unknown_key": 1}"#);
    let out = regretlab(&["sweep", "--config", &config]);
    assert!(!out.status.success());
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn empty_controller_set_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "empty.json", r#"{"controllers": [], "gap_norms": [0.5], "samples_per_point": 1}"#);
    let out = regretlab(&["sweep", "--config", &config]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().count(), 1, "{text}");
}

#[test]
fn reproduce_fig1_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (name, threads) in [("a", None), ("b", Some("1"))] {
        let out_dir = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_regretlab"));
        cmd.args(["reproduce-fig1", "--seed", "7", "--out"]).arg(&out_dir);
        if let Some(t) = threads {
            cmd.env("REGRETLAB_THREADS", t);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(out_dir.join("fig1.gp").exists());
        outputs.push(std::fs::read(out_dir.join("fig1_data.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    assert!(text.starts_with("gap_norm,hinf_max_regret,hinf_bound,ce_max_regret,ce_bound\n"));
    assert_eq!(text.lines().count(), 21);
}
