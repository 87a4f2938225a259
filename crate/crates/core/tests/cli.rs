use std::path::Path;
use std::process::{Command, Output};

fn theftnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_theftnet")).args(args).output().expect("binary runs")
}

fn generate(dir: &Path, name: &str, users: &str) -> String {
    let out = dir.join(name).to_string_lossy().into_owned();
    let o = theftnet(&["generate", "--users", users, "--theft-frac", "0.2", "--missing", "0.02", "--seed", "3", "--out", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate(dir.path(), "a.csv", "60");
    let b = generate(dir.path(), "b.csv", "60");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let manifest = std::fs::read_to_string(format!("{a}.manifest")).unwrap();
    assert!(manifest.contains("dataset_sha256"));
    assert!(manifest.contains("seed = 3"));
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    let o = theftnet(&["generate", "--users", "100", "--theft-frac", "1.5", "--out", "/tmp/never.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!Path::new("/tmp/never.csv").exists());

    let o = theftnet(&["train", "--model", "resnet", "--data", "x.csv", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for kind in ["ms-densenet", "densenet1d", "cnn", "rf", "gbm"] {
        assert!(err.contains(kind), "{err}");
    }

    let o = theftnet(&["--threads", "0", "features", "--data", "x.csv", "--out", "y.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_data_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = theftnet(&["train", "--model", "rf", "--data", "/nonexistent.csv", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn random_forest_training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "d.csv", "120");
    let mut reports = Vec::new();
    for run in ["r1", "r2"] {
        let out = dir.path().join(run);
        let o = theftnet(&["train", "--model", "rf", "--data", &data, "--seed", "5", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join("fold1.model").exists());
        assert!(out.join("manifest.txt").exists());
        reports.push(std::fs::read_to_string(out.join("report.csv")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn short_neural_run_reports_every_fold() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "d.csv", "80");
    let config = dir.path().join("quick.conf");
    std::fs::write(&config, "train.max_epochs = 2\ntrain.batch_size = 16\n").unwrap();
    let out = dir.path().join("ms");
    let o = theftnet(&[
        "train", "--model", "ms-densenet", "--data", &data, "--config", config.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let rows: Vec<&str> = report.lines().skip(1).filter(|l| !l.is_empty()).collect();
    assert!(rows.len() >= 5, "{report}");
    for row in &rows {
        for cell in row.split(',').skip(1) {
            if let Ok(v) = cell.parse::<f64>() {
                assert!(v.is_finite(), "{row}");
            }
        }
    }
    for k in 1..=5 {
        assert!(out.join(format!("fold{k}.ckpt")).exists());
    }
    assert!(std::fs::read_to_string(out.join("history.csv")).unwrap().starts_with("fold,epoch,train_logloss,val_logloss"));
}

#[test]
fn features_subcommand_writes_one_row_per_user() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "d.csv", "30");
    let out = dir.path().join("f.csv");
    let o = theftnet(&["features", "--data", &data, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().count(), 31);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 44);
}
