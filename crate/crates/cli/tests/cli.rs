use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driftlab"))
        .args(args)
        .env_remove("DRIFTLAB_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&stdout(o)).unwrap()
}

#[test]
fn help_exits_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["q-compute", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    let o = run(&["no-such-command"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error class="));
    assert_eq!(run(&[]).status.code(), Some(1));
}

#[test]
fn green_table_values() {
    let o = run(&["green-table", "--ymax", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], vec!["y", "green", "green_4dp", "shifted_laplacian"]);
    assert_eq!(rows.len(), 5);
    let dp: Vec<&str> = rows[1..4].iter().map(|r| r[2]).collect();
    assert_eq!(dp, vec!["0.7071", "0.1213", "0.0208"]);
    let g0: f64 = rows[1][1].parse().unwrap();
    assert!((g0 - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
}

#[test]
fn q_compute_on_zero_field() {
    let v = json(&run(&["q-compute", "--field", r#"{"dims":[4,4],"half_values":[0,0,0,0,0,0,0,0]}"#]));
    for key in ["q", "q_direct", "q_boundary", "q_chain", "q_slab4"] {
        assert!((v[key].as_f64().unwrap() - 0.25).abs() < 1e-12, "{key}");
    }
    assert!(v["q_slab2"].is_null());
}

#[test]
fn amplitude_violation_is_a_validation_error() {
    let o = run(&["q-compute", "--field", r#"{"dims":[4],"half_values":[0.5,0.0]}"#]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn monte_carlo_budget_error_exits_three() {
    let o = run(&["mc-estimate", "--dims", "4", "--field", r#"{"generator":{"kind":"uniform","amplitude":0.1,"seed":1}}"#, "--steps", "10"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_driftlab"))
        .args(["green-table"])
        .env("DRIFTLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_runs_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("table.csv");
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        format!(r#"{{"command":"green-table","ymax":2,"output":{:?},"lattice":{{"cache_max":4}}}}"#, out),
    )
    .unwrap();
    let o = run(&["--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 4);

    std::fs::write(&cfg, r#"{"command":"green-table","ymax":2,"colour":"red"}"#).unwrap();
    assert_eq!(run(&["--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    std::fs::write(&cfg, r#"{"command":"green-table","lattice":{"cache":1}}"#).unwrap();
    assert_eq!(run(&["--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "green-table"]).status.code(), Some(1));
}

#[test]
fn counterexample_artifact() {
    let v = json(&run(&["counterexample-search", "--dims", "6,2"]));
    assert!(v["q"].as_f64().unwrap() > 0.2501);
    assert!(v["mode_q"].as_f64().unwrap() > 0.25);
    assert_eq!(v["mode"]["k"], 1);
    let field = v["field"].to_string();
    let check = json(&run(&["q-compute", "--field", &field]));
    assert!((check["q"].as_f64().unwrap() - v["q"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn qv_check_holds() {
    let v = json(&run(&["qv-check", "--count", "20", "--transverse", "6"]));
    assert_eq!(v["holds"], true);
    assert!(v["min_q_v"].as_f64().unwrap() >= -1e-12);
}

#[test]
fn reruns_are_byte_identical() {
    for args in [
        &["q-compare", "--dims", "4,2", "--count", "5"][..],
        &["mc-estimate", "--dims", "4,2", "--field", r#"{"generator":{"kind":"uniform","amplitude":0.1,"seed":3}}"#, "--steps", "1000", "--paths", "100"],
        &["perturb-scan", "--dims", "6,2"],
        &["symbol-limit", "--field", r#"{"dims":[4],"generator":{"kind":"uniform","amplitude":0.2,"seed":1}}"#, "--xi", "1.5"],
    ] {
        let a = run(args);
        assert!(a.status.success(), "{args:?}: {}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(a.stdout, run(args).stdout, "{args:?}");
    }
}
