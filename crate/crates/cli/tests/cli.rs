//! End-to-end tests of the command-line binary: output contracts,
//! exit codes, determinism and the run-directory artifacts.

use std::fs;
use std::path::Path;
use std::process::Command;

use stackids::data::read_emx;
use stackids::models::{StackedReport, TrainReport};

struct CmdOutput {
    status: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> CmdOutput {
    let out = Command::new(env!("CARGO_BIN_EXE_stackids"))
        .args(args)
        .output()
        .expect("binary runs");
    CmdOutput {
        status: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn ingest_fixture_reports_composition_and_writes_caches() {
    let dir = tempfile::tempdir().unwrap();
    let out = path_str(&dir.path().join("run"));
    let r = run(&["ingest", "--fixture", "--out", &out]);
    assert_eq!(r.status, 0, "stderr: {}", r.stderr);
    assert!(r.stdout.contains("rows: 1000"), "{}", r.stdout);
    for name in [
        "Normal",
        "Generic",
        "Exploits",
        "Fuzzers",
        "DoS",
        "Reconnaissance",
        "Analysis",
        "Backdoor",
        "Shellcode",
        "Worms",
    ] {
        assert!(r.stdout.contains(name), "missing {name} in {}", r.stdout);
    }
    assert!(r.stdout.contains("encoded feature width:"), "{}", r.stdout);

    let run_dir = dir.path().join("run");
    assert!(run_dir.join("run_config.json").exists());
    assert!(run_dir.join("dataset.sha256").exists());
    let train = read_emx(&run_dir.join("train.emx")).unwrap();
    let test = read_emx(&run_dir.join("test.emx")).unwrap();
    assert_eq!(train.features(), test.features());
    assert_eq!(test.rows(), 300);
}

#[test]
fn ingest_without_a_source_is_a_usage_error() {
    let r = run(&["ingest"]);
    assert_eq!(r.status, 2, "stderr: {}", r.stderr);
    assert!(r.stderr.contains("--data"), "{}", r.stderr);
}

#[test]
fn missing_schema_file_exits_2_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    fs::write(&csv, stackids::data::fixture_csv()).unwrap();
    let r = run(&[
        "ingest",
        "--data",
        &path_str(&csv),
        "--schema",
        "/no/such/schema.json",
        "--out",
        &path_str(&dir.path().join("run")),
    ]);
    assert_eq!(r.status, 2, "stderr: {}", r.stderr);
    assert!(r.stderr.contains("/no/such/schema.json"), "{}", r.stderr);
}

#[test]
fn train_twice_with_one_seed_writes_identical_model_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = path_str(&dir.path().join("a"));
    let out_b = path_str(&dir.path().join("b"));
    let args = ["train", "--fixture", "--preset", "ann-adagrad-20", "--epochs", "2"];
    let a = run(&[&args[..], &["--out", &out_a]].concat());
    let b = run(&[&args[..], &["--out", &out_b]].concat());
    assert_eq!(a.status, 0, "stderr: {}", a.stderr);
    assert_eq!(b.status, 0, "stderr: {}", b.stderr);
    assert!(a.stdout.contains("epoch 1/2"), "{}", a.stdout);

    let bytes_a = fs::read(dir.path().join("a/model.mdl")).unwrap();
    let bytes_b = fs::read(dir.path().join("b/model.mdl")).unwrap();
    assert_eq!(bytes_a, bytes_b, "model files differ between identical runs");

    let ra: TrainReport =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/train_report.json")).unwrap())
            .unwrap();
    let rb: TrainReport =
        serde_json::from_str(&fs::read_to_string(dir.path().join("b/train_report.json")).unwrap())
            .unwrap();
    assert_eq!(ra.param_checksum, rb.param_checksum);
    assert_eq!(ra.epochs, rb.epochs);
}

#[test]
fn unknown_preset_exits_2_listing_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&[
        "train",
        "--fixture",
        "--preset",
        "bogus-model",
        "--out",
        &path_str(&dir.path().join("run")),
    ]);
    assert_eq!(r.status, 2, "stderr: {}", r.stderr);
    assert!(r.stderr.contains("ann-adagrad-20"), "{}", r.stderr);
    assert!(r.stderr.contains("proposed-adagrad-25"), "{}", r.stderr);
}

#[test]
fn evaluate_on_train_reproduces_the_training_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let train_out = dir.path().join("train");
    let r = run(&[
        "train",
        "--fixture",
        "--preset",
        "ann-adagrad-20",
        "--epochs",
        "2",
        "--out",
        &path_str(&train_out),
    ]);
    assert_eq!(r.status, 0, "stderr: {}", r.stderr);
    let report: TrainReport = serde_json::from_str(
        &fs::read_to_string(train_out.join("train_report.json")).unwrap(),
    )
    .unwrap();

    let eval_out = dir.path().join("eval");
    let r = run(&[
        "evaluate",
        "--model",
        &path_str(&train_out.join("model.mdl")),
        "--fixture",
        "--split",
        "train",
        "--out",
        &path_str(&eval_out),
    ]);
    assert_eq!(r.status, 0, "stderr: {}", r.stderr);
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval_out.join("metrics.json")).unwrap()).unwrap();
    let accuracy = metrics["accuracy"].as_f64().unwrap();
    assert!(
        (accuracy - report.final_accuracy()).abs() < 1e-9,
        "evaluate {} vs training {}",
        accuracy,
        report.final_accuracy()
    );

    let table = fs::read_to_string(eval_out.join("metrics_table.txt")).unwrap();
    let header = table.lines().next().unwrap();
    let columns: Vec<&str> = header.split("  ").filter(|c| !c.is_empty()).collect();
    assert_eq!(
        columns,
        [
            "Epoch",
            "Accuracy",
            "Precision",
            "Recall",
            "F1-Score",
            "Training time (s)"
        ]
    );
}

#[test]
fn evaluate_rejects_a_feature_width_mismatch() {
    let dir = tempfile::tempdir().unwrap();

    let schema = r#"{
        "columns": [
            {"name": "a", "kind": "numeric"},
            {"name": "b", "kind": "numeric"}
        ],
        "attack_cat": "attack_cat",
        "label": "label"
    }"#;
    let schema_path = dir.path().join("schema.json");
    fs::write(&schema_path, schema).unwrap();

    let mut csv = String::from("a,b,attack_cat,label\n");
    for i in 0..40 {
        let (class, label) = if i % 2 == 0 { ("Normal", 0) } else { ("Generic", 1) };
        csv.push_str(&format!("{}.5,{}.25,{class},{label}\n", i, 40 - i));
    }
    let csv_path = dir.path().join("tiny.csv");
    fs::write(&csv_path, csv).unwrap();

    let train_out = dir.path().join("train");
    let r = run(&[
        "train",
        "--data",
        &path_str(&csv_path),
        "--schema",
        &path_str(&schema_path),
        "--label-mode",
        "binary",
        "--preset",
        "ann-adagrad-20",
        "--epochs",
        "1",
        "--out",
        &path_str(&train_out),
    ]);
    assert_eq!(r.status, 0, "stderr: {}", r.stderr);

    let r = run(&[
        "evaluate",
        "--model",
        &path_str(&train_out.join("model.mdl")),
        "--fixture",
        "--out",
        &path_str(&dir.path().join("eval")),
    ]);
    assert_eq!(r.status, 2, "stderr: {}", r.stderr);
    assert!(r.stderr.contains("features"), "{}", r.stderr);
}

#[test]
fn evaluate_rejects_a_label_mode_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let train_out = dir.path().join("train");
    let r = run(&[
        "train",
        "--fixture",
        "--label-mode",
        "binary",
        "--preset",
        "ann-adagrad-20",
        "--epochs",
        "1",
        "--out",
        &path_str(&train_out),
    ]);
    assert_eq!(r.status, 0, "stderr: {}", r.stderr);
    let r = run(&[
        "evaluate",
        "--model",
        &path_str(&train_out.join("model.mdl")),
        "--fixture",
        "--label-mode",
        "multiclass",
        "--out",
        &path_str(&dir.path().join("eval")),
    ]);
    assert_eq!(r.status, 2, "stderr: {}", r.stderr);
    assert!(r.stderr.contains("binary"), "{}", r.stderr);
}

#[test]
fn compare_two_presets_emits_the_ranked_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let r = run(&[
        "compare",
        "--fixture",
        "--preset",
        "ann-adagrad-20",
        "--preset",
        "ann-sgd-20",
        "--epochs",
        "1",
        "--out",
        &path_str(&out),
    ]);
    assert_eq!(r.status, 0, "stderr: {}", r.stderr);

    let csv = fs::read_to_string(out.join("comparison.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "Model,Classes,Accuracy,Precision,Recall,F1-Score"
    );
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    let acc: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(acc[0] >= acc[1], "not sorted: {acc:?}");
    for row in &rows {
        assert_eq!(row[1], "10");
    }
}

#[test]
fn compare_rejects_fewer_than_two_members() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&[
        "compare",
        "--fixture",
        "--preset",
        "ann-adagrad-20",
        "--out",
        &path_str(&dir.path().join("run")),
    ]);
    assert_eq!(r.status, 2, "stderr: {}", r.stderr);
    assert!(r.stderr.contains("at least two"), "{}", r.stderr);
}

#[test]
fn numeric_divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"kind": "ann", "name": "hot", "optimizer": "sgd", "learning_rate": 1e308, "epochs": 5}"#;
    let cfg_path = dir.path().join("hot.json");
    fs::write(&cfg_path, config).unwrap();
    let r = run(&[
        "train",
        "--fixture",
        "--config",
        &path_str(&cfg_path),
        "--out",
        &path_str(&dir.path().join("run")),
    ]);
    assert_eq!(r.status, 3, "stderr: {}", r.stderr);
}

#[test]
fn compare_member_failure_names_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"kind": "ann", "name": "hot", "optimizer": "sgd", "learning_rate": 1e308, "epochs": 5}"#;
    let cfg_path = dir.path().join("hot.json");
    fs::write(&cfg_path, config).unwrap();
    let r = run(&[
        "compare",
        "--fixture",
        "--preset",
        "ann-adagrad-20",
        "--config",
        &path_str(&cfg_path),
        "--epochs",
        "5",
        "--out",
        &path_str(&dir.path().join("run")),
    ]);
    assert_eq!(r.status, 3, "stderr: {}", r.stderr);
    assert!(r.stderr.contains("hot"), "{}", r.stderr);
}

#[test]
fn stacked_training_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{
        "kind": "stacked",
        "name": "mini-stack",
        "units": [8, 10],
        "epochs": 1,
        "folds": 2,
        "bases": [
            {"kind": "ann", "units": [8, 10], "epochs": 1},
            {"kind": "ann", "units": [6, 10], "epochs": 1}
        ]
    }"#;
    let cfg_path = dir.path().join("stack.json");
    fs::write(&cfg_path, config).unwrap();
    let out = dir.path().join("run");
    let r = run(&[
        "train",
        "--fixture",
        "--config",
        &path_str(&cfg_path),
        "--out",
        &path_str(&out),
    ]);
    assert_eq!(r.status, 0, "stderr: {}", r.stderr);
    assert!(r.stdout.contains("ensemble training accuracy"), "{}", r.stdout);

    let report: StackedReport = serde_json::from_str(
        &fs::read_to_string(out.join("train_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report.folds.len(), 2);
    assert_eq!(report.base_reports.len(), 2);

    let eval_out = dir.path().join("eval");
    let r = run(&[
        "evaluate",
        "--model",
        &path_str(&out.join("model.mdl")),
        "--fixture",
        "--split",
        "train",
        "--out",
        &path_str(&eval_out),
    ]);
    assert_eq!(r.status, 0, "stderr: {}", r.stderr);
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval_out.join("metrics.json")).unwrap()).unwrap();
    let accuracy = metrics["accuracy"].as_f64().unwrap();
    assert!(
        (accuracy - report.train_accuracy).abs() < 1e-9,
        "evaluate {} vs ensemble {}",
        accuracy,
        report.train_accuracy
    );
}

#[test]
fn run_config_is_written_with_the_resolved_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let r = run(&[
        "train",
        "--fixture",
        "--preset",
        "proposed-adagrad-25",
        "--epochs",
        "1",
        "--seed",
        "7",
        "--out",
        &path_str(&out),
    ]);
    // Even a slow run writes the config first; check it after success.
    assert_eq!(r.status, 0, "stderr: {}", r.stderr);
    let rc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run_config.json")).unwrap()).unwrap();
    assert_eq!(rc["seed"], 7);
    assert_eq!(rc["models"][0]["name"], "proposed-adagrad-25");
    assert_eq!(rc["models"][0]["units"], serde_json::json!([64, 32, 10]));
    assert_eq!(rc["models"][0]["stacked"]["folds"], 5);
    let digest = fs::read_to_string(out.join("dataset.sha256")).unwrap();
    assert_eq!(digest.trim().len(), 64);
}
