use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn simgrade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simgrade"))
        .args(args)
        .env_remove("SIMGRADE_SEED")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

/// Synthesizes and embeds a small corpus; returns the program embeddings path.
fn small_corpus(dir: &Path, n: usize) -> PathBuf {
    let out = simgrade(&["--seed", "3", "synth", "-n", &n.to_string(), "--out-dir", &s(&dir.join("synth"))]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = simgrade(&[
        "--seed",
        "3",
        "embed",
        "--submissions",
        &s(&dir.join("synth/submissions.jsonl")),
        "--out-dir",
        &s(&dir.join("embed")),
        "--dim",
        "12",
        "--epochs",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    dir.join("embed/programs.jsonl")
}

#[test]
fn unknown_algorithm_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = simgrade(&["assign", "--embeddings", "x.jsonl", "--algorithm", "spiral", "--out", &s(&dir.path().join("a.json"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_subcommand_is_usage_error() {
    assert_eq!(code(&simgrade(&[])), 2);
}

#[test]
fn zero_threads_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = simgrade(&["--threads", "0", "synth", "-n", "1", "--out-dir", &s(dir.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_input_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = simgrade(&["embed", "--submissions", &s(&dir.path().join("nope.jsonl")), "--out-dir", &s(dir.path())]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).contains("MissingFile"));
}

#[test]
fn too_many_graders_is_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let emb = small_corpus(dir.path(), 30);
    let out = simgrade(&["assign", "--embeddings", &s(&emb), "-k", "500", "--out", &s(&dir.path().join("a.json"))]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("TooFewSubmissions"), "{}", stderr(&out));
}

#[test]
fn empty_vocabulary_is_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path(), 10);
    let out = simgrade(&[
        "embed",
        "--submissions",
        &s(&dir.path().join("synth/submissions.jsonl")),
        "--out-dir",
        &s(&dir.path().join("e2")),
        "--min-count",
        "100000",
    ]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("EmptyVocabulary"));
}

#[test]
fn malformed_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"sed": 1}"#).unwrap();
    let out = simgrade(&["--config", &s(&cfg), "synth", "-n", "1", "--out-dir", &s(dir.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn zero_programs_gives_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = simgrade(&["synth", "-n", "0", "--out-dir", &s(dir.path())]);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read_to_string(dir.path().join("submissions.jsonl")).unwrap(), "");
    assert_eq!(fs::read_to_string(dir.path().join("labels.jsonl")).unwrap(), "");
    assert!(dir.path().join("submissions.jsonl.provenance.json").exists());
}

#[test]
fn comparison_csv_lists_requested_algorithms_and_random() {
    let dir = tempfile::tempdir().unwrap();
    let emb = small_corpus(dir.path(), 60);
    let out_dir = dir.path().join("cmp");
    let out = simgrade(&[
        "simulate",
        "--embeddings",
        &s(&emb),
        "--algorithms",
        "cluster_path,snake",
        "-k",
        "3",
        "--reps",
        "2",
        "--bootstrap-trials",
        "200",
        "--out-dir",
        &s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "algorithm,mean_error_pct,validation_distance,p_vs_random,n_reps");
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names.len(), 3);
    for want in ["random", "cluster_path", "snake"] {
        assert!(names.contains(&want), "{names:?}");
    }
    let random = lines.iter().find(|l| l.starts_with("random,")).unwrap();
    assert_eq!(random.split(',').nth(3), Some(""));
    let json: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("comparison.json")).unwrap()).unwrap();
    assert_eq!(json["provenance"]["command"], "simulate");

    let table = simgrade(&["report", "--comparison", &s(&out_dir.join("comparison.json"))]);
    assert_eq!(code(&table), 0);
    assert!(String::from_utf8_lossy(&table.stdout).contains("cluster_path"));
}

fn write_logs(path: &Path, lines: &[Value]) {
    let text: String = lines.iter().map(|v| v.to_string() + "\n").collect();
    fs::write(path, text).unwrap();
}

fn first_ids(emb: &Path, n: usize) -> Vec<String> {
    fs::read_to_string(emb)
        .unwrap()
        .lines()
        .take(n)
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["submission_id"].as_str().unwrap().to_owned())
        .collect()
}

#[test]
fn analyze_without_validations_is_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let emb = small_corpus(dir.path(), 10);
    let ids = first_ids(&emb, 3);
    let logs = dir.path().join("logs.jsonl");
    let entries: Vec<Value> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            serde_json::json!({"grader_id": "g", "submission_id": id, "timestamp_ms": i,
                "assigned_score": 1.0, "max_score": 5.0})
        })
        .collect();
    write_logs(&logs, &entries);
    let out = simgrade(&["analyze", "--logs", &s(&logs), "--embeddings", &s(&emb), "--out-dir", &s(dir.path())]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("NoValidationEntries"), "{}", stderr(&out));
}

#[test]
fn analyze_perfect_grading_has_zero_rmse() {
    let dir = tempfile::tempdir().unwrap();
    let emb = small_corpus(dir.path(), 10);
    let ids = first_ids(&emb, 6);
    let logs = dir.path().join("logs.jsonl");
    let entries: Vec<Value> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            serde_json::json!({"grader_id": "g", "submission_id": id, "timestamp_ms": i,
                "assigned_score": i as f64, "max_score": 10.0, "is_validation": true, "true_score": i as f64})
        })
        .collect();
    write_logs(&logs, &entries);
    let out_dir = dir.path().join("an");
    let out = simgrade(&["analyze", "--logs", &s(&logs), "--embeddings", &s(&emb), "--out-dir", &s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["grader_errors"]["rmse"], 0.0);
    assert_eq!(summary["window"]["n_pairs"], 5);
}

fn assignment_seed(dir: &Path, emb: &Path, extra: &[&str], envs: &[(&str, &str)]) -> u64 {
    let path = dir.join("a.json");
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_simgrade"));
    cmd.env_remove("SIMGRADE_SEED").envs(envs.iter().copied()).args(extra);
    cmd.args(["assign", "--embeddings", &s(emb), "-k", "2", "--out", &s(&path)]);
    let out = cmd.output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    v["seed"].as_u64().unwrap()
}

#[test]
fn seed_precedence_flag_then_env_then_config() {
    let dir = tempfile::tempdir().unwrap();
    let emb = small_corpus(dir.path(), 20);
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed": 11, "assignment": {"n_validations": 2}}"#).unwrap();
    let c = s(&cfg);
    let d = dir.path();
    assert_eq!(assignment_seed(d, &emb, &["--config", &c], &[]), 11);
    assert_eq!(assignment_seed(d, &emb, &["--config", &c], &[("SIMGRADE_SEED", "22")]), 22);
    assert_eq!(assignment_seed(d, &emb, &["--config", &c, "--seed", "33"], &[("SIMGRADE_SEED", "22")]), 33);

    let v: Value = serde_json::from_str(&fs::read_to_string(d.join("a.json")).unwrap()).unwrap();
    assert_eq!(v["provenance"]["config"]["assignment"]["n_validations"], 2);
    assert_eq!(v["graders"][0]["queue"].as_array().unwrap().iter().filter(|e| e["validation"] == true).count(), 2);
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let emb = small_corpus(dir.path(), 20);
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"assignment": {"n_graders": 5, "n_validations": 1}}"#).unwrap();
    let path = dir.path().join("a.json");
    let out = simgrade(&["--config", &s(&cfg), "assign", "--embeddings", &s(&emb), "-k", "3", "--out", &s(&path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["graders"].as_array().unwrap().len(), 3);
    assert_eq!(v["provenance"]["config"]["assignment"]["n_validations"], 1);
}

#[test]
fn single_assignment_session_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let emb = small_corpus(dir.path(), 30);
    let a = dir.path().join("a.json");
    let out = simgrade(&["assign", "--embeddings", &s(&emb), "--algorithm", "snake", "-k", "3", "--out", &s(&a)]);
    assert_eq!(code(&out), 0);
    let session = dir.path().join("session");
    let out = simgrade(&["simulate", "--embeddings", &s(&emb), "--assignment", &s(&a), "--window", "2", "--out-dir", &s(&session)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(session.join("session.csv")).unwrap();
    // 25 regular submissions plus 5 validations in each of 3 queues.
    assert_eq!(csv.lines().count(), 1 + 25 + 15);
    let json: Value = serde_json::from_str(&fs::read_to_string(session.join("session.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["window"], 2);
    let inputs = json["provenance"]["inputs"].as_array().unwrap();
    assert_eq!(inputs.len(), 2);
}
