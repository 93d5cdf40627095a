use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn sctep(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sctep"))
        .args(args)
        .current_dir(dir)
        .env_remove("SCTEP_WORKERS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn case5_json() -> Value {
    serde_json::from_str(sctep_core::network::CASE5_JSON).unwrap()
}

fn write_json(path: &Path, v: &Value) {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&sctep(&["validate", "case5"], dir.path())), 0);

    let missing = sctep(&["validate", "nope.json"], dir.path());
    assert_eq!(code(&missing), 2);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("I/O"));

    // A radial bus whose only line is outaged in some state.
    let mut c = case5_json();
    let mut bus = c["buses"][0].clone();
    bus["id"] = json!(6);
    c["buses"].as_array_mut().unwrap().push(bus);
    let mut line = c["lines"][0].clone();
    line["id"] = json!(7);
    line["from_bus"] = json!(5);
    line["to_bus"] = json!(6);
    c["lines"].as_array_mut().unwrap().push(line);
    c["states"].as_array_mut().unwrap().push(json!({"k": 7, "outaged_line": 7, "weight": 0.05}));
    write_json(&dir.path().join("island.json"), &c);
    let o = sctep(&["validate", "island.json"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("island"));
}

#[test]
fn solve_reports_curtailment_and_zero_demand() {
    let dir = tempfile::tempdir().unwrap();
    let o = sctep(
        &["solve", "case5", "--objective", "curtailment", "--coalition", "none", "--out", "s.json"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let art: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    assert!(art["result"]["objective"].as_f64().unwrap() > 1.0);
    assert!(art["case_hash"].is_string() && art["tool_version"].is_string());

    let mut c = case5_json();
    for b in c["buses"].as_array_mut().unwrap() {
        b["demand_p"] = json!(0.0);
        b["demand_q"] = json!(0.0);
        b["res_p"] = json!(0.0);
    }
    for s in c["scenarios"].as_array_mut().unwrap() {
        s["overrides"] = json!([]);
    }
    write_json(&dir.path().join("zero.json"), &c);
    let o = sctep(&["solve", "zero.json", "--coalition", "all"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("objective   0.000 MW"), "{}", stdout(&o));
}

#[test]
fn screen_game_report_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = sctep(&["screen", "case5", "--top", "2", "--keep", "kept.json", "--out", "rank.json"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let kept: Value = serde_json::from_str(&fs::read_to_string(d.join("kept.json")).unwrap()).unwrap();
    assert_eq!(kept["players"].as_array().unwrap().len(), 2);
    assert!(kept["case_hash"].is_string());

    let game = |out: &str, workers: &str, extra: &[&str]| {
        let mut args = vec!["game", "case5", "--players", "kept.json", "--out", out, "--workers", workers];
        args.extend_from_slice(extra);
        let o = sctep(&args, d);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(d.join(out)).unwrap()
    };
    let a = game("a.json", "1", &["--exact"]);
    let b = game("b.json", "2", &[]);
    assert_eq!(a, b);

    // Resuming a finished journal performs no solves.
    let before = fs::read_to_string(d.join("a.json.journal")).unwrap();
    let c = game("a.json", "1", &["--resume"]);
    assert_eq!(c, a);
    assert_eq!(fs::read_to_string(d.join("a.json.journal")).unwrap(), before);

    let s1 = game("s1.json", "1", &["--sample", "30", "--seed", "1"]);
    let s2 = game("s2.json", "2", &["--sample", "30", "--seed", "1"]);
    assert_eq!(s1, s2);

    let o = sctep(&["report", "a.json", "--format", "csv", "--out", "mc.csv"], d);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(d.join("mc.csv")).unwrap();
    assert!(csv.starts_with("# tool_version"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2 * 2);

    let o = sctep(&["report", "a.json", "--format", "json"], d);
    assert_eq!(code(&o), 0);
    let bundle: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(bundle["players"].as_array().unwrap().len(), 2);
    assert_eq!(bundle["mc_table"].as_array().unwrap().len(), 4);
    assert!(bundle["metadata"]["case_hash"].is_string());

    // An artifact without values is refused and nothing is written.
    let mut empty: Value = serde_json::from_slice(&a).unwrap();
    empty["values"] = json!([]);
    empty["mc_samples"] = json!([[], []]);
    write_json(&d.join("empty.json"), &empty);
    let o = sctep(&["report", "empty.json", "--out", "empty.csv"], d);
    assert_eq!(code(&o), 1);
    assert!(!d.join("empty.csv").exists());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&sctep(&["solve"], dir.path())), 2);
    assert_eq!(code(&sctep(&["game", "case5", "--workers", "0"], dir.path())), 2);
    assert_eq!(code(&sctep(&["solve", "case5", "--coalition", "x"], dir.path())), 2);
}

#[test]
fn import_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("case3.m"),
        "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1 0 345 1 1.1 0.9;\n2 1 90 30 0 0 1 1 0 345 1 1.1 0.9;\n\
         3 1 100 35 0 0 1 1 0 345 1 1.1 0.9;\n];\nmpc.gen = [\n1 0 0 300 -300 1 100 1 250 10 0 0 0 0 0 0 0 0 0 0 0;\n];\n\
         mpc.branch = [\n1 2 0.01 0.1 0 250 250 250 0 0 1 -360 360;\n1 3 0.02 0.2 0 0 250 250 0 0 1 -360 360;\n\
         2 3 0.01 0.1 0 150 250 250 0 0 1 -360 360;\n];\n",
    )
    .unwrap();
    let o = sctep(&["import-matpower", "case3.m", "--out", "case3.json", "--line-li-max", "50"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&sctep(&["validate", "case3.json"], d)), 0);
    let o = sctep(&["dump-nlp", "case5", "--coalition", "none"], d);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).len() > 1000);
}
