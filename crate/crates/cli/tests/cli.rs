use std::path::Path;
use std::process::{Command, Output};

fn degsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_degsel"))
        .args(args)
        .env_remove("DEGSEL_ENDPOINT")
        .output()
        .expect("run degsel")
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn generate(dir: &Path) -> String {
    let data = dir.join("data.jsonl");
    let data = data.to_str().unwrap().to_string();
    stdout(&degsel(&[
        "generate",
        "--case",
        "case2",
        "--per-class",
        "5",
        "--seed",
        "3",
        "--out",
        &data,
    ]));
    data
}

#[test]
fn generate_then_select() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path());
    assert_eq!(std::fs::read_to_string(&data).unwrap().lines().count(), 20);

    let out = stdout(&degsel(&[
        "select",
        "--trajectory",
        &data,
        "--unit",
        "HomogGamma-002",
        "--context",
        "cumulative wear of a cutting tool",
    ]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let chosen = v["chosen"]["id"].as_str().unwrap();
    let retained: Vec<&str> = v["retained"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["id"].as_str().unwrap())
        .collect();
    assert!(retained.contains(&chosen));
    assert_eq!(v["decisions"].as_object().unwrap().len(), 2);
}

#[test]
fn select_case1_queries_family_only() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("one.jsonl");
    stdout(&degsel(&[
        "generate",
        "--case",
        "case1",
        "--per-class",
        "5",
        "--out",
        data.to_str().unwrap(),
    ]));
    let out = stdout(&degsel(&[
        "select",
        "--trajectory",
        data.to_str().unwrap(),
        "--case",
        "case1",
    ]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let keys: Vec<&String> = v["decisions"].as_object().unwrap().keys().collect();
    assert_eq!(keys, vec!["F"]);
}

#[test]
fn strict_select_rejects_leaky_context() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path());
    let o = degsel(&[
        "select",
        "--trajectory",
        &data,
        "--context",
        "remaining life is 20 h",
        "--strict",
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("leakage"));
}

#[test]
fn bench_with_config_file_and_csv_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "case = \"case1\"\nper_class_count = 10\nn_values = [30, 70]\nseed = 5\n",
    )
    .unwrap();
    let csv = dir.path().join("out.csv");
    let out = stdout(&degsel(&[
        "bench",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        csv.to_str().unwrap(),
    ]));
    assert!(out.contains("## n = 30") && out.contains("## n = 70") && !out.contains("## n = 50"));
    let text = std::fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("case,perturbation,n,method,metric,value"));
    assert!(text.contains("case1,none,70,proposed,f1,"));
}

#[test]
fn robustness_prints_every_mode() {
    let out = stdout(&degsel(&[
        "robustness",
        "--case",
        "case1",
        "--per-class",
        "10",
        "--n",
        "50",
    ]));
    for mode in ["none", "wrong_hi", "wrong_context", "wrong_both"] {
        assert!(out.contains(&format!("| {mode} | 50 |")), "{out}");
    }
}

#[test]
fn invalid_settings_fail() {
    assert!(!degsel(&["bench", "--n", "40"]).status.success());
    assert!(!degsel(&["bench", "--per-class", "2"]).status.success());
    assert!(!degsel(&["bench", "--delta", "1.5"]).status.success());
}
