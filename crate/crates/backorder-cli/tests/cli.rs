//! End-to-end CLI tests against the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

fn backorder(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_backorder"))
        .args(args)
        .current_dir(dir)
        .env_remove("BACKORDER_OUT")
        .env_remove("BACKORDER_THREADS")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let config = serde_json::json!({
        "data": {"type": "synthetic", "n_rows": 1500, "positive_rate": 0.05, "n_informative": 4},
        "model": {"type": "bbc", "n_estimators": 20},
        "evaluation": {"importance_repeats": 2},
        "seed": 5,
        "output_dir": dir.join("run").to_str().unwrap(),
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn synth_writes_a_loadable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = backorder(
        &[
            "synth",
            "--rows",
            "200",
            "--positive-rate",
            "0.1",
            "--informative",
            "3",
            "--out-file",
            "data.csv",
            "--seed",
            "9",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = backorder::dataset::load_csv(
        dir.path().join("data.csv"),
        &backorder::dataset::inventory_schema(),
    )
    .unwrap();
    assert_eq!(table.row_count(), 200);
}

#[test]
fn train_then_evaluate_then_importance_then_economics() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let config = config.to_str().unwrap();

    let out = backorder(&["train", "--config", config], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("roc_auc"), "{stdout}");
    let run_dir = dir.path().join("run");
    assert!(run_dir.join("model.json").exists());
    assert!(run_dir.join("metrics.csv").exists());

    // evaluate the saved model into a different directory
    let out = backorder(
        &[
            "evaluate",
            "--model-dir",
            run_dir.to_str().unwrap(),
            "--config",
            config,
            "--out",
            "eval_out",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("eval_out").join("metrics.csv").exists());

    let out = backorder(
        &[
            "importance",
            "--model-dir",
            run_dir.to_str().unwrap(),
            "--config",
            config,
            "--out",
            "imp_out",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("imp_out").join("importance.csv").exists());

    let out = backorder(
        &[
            "economics",
            "--model-dir",
            run_dir.to_str().unwrap(),
            "--config",
            config,
            "--out",
            "econ_out",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("optimal profit"), "{stdout}");
    assert!(dir.path().join("econ_out").join("economics.csv").exists());
}

#[test]
fn prepare_and_screen_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let config = config.to_str().unwrap();

    let out = backorder(&["prepare", "--config", config, "--out", "prep"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("prep").join("processed_train.csv").exists());
    assert!(dir.path().join("prep").join("transform.json").exists());

    let out = backorder(&["screen", "--config", config, "--out", "screen"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let screening = std::fs::read_to_string(dir.path().join("screen").join("screening.csv")).unwrap();
    assert!(dir.path().join("screen").join("correlation.csv").exists());
    assert!(screening.contains("mann-whitney-u"));
    assert!(screening.contains("chi-square"));
    assert!(screening.contains("nationalInv"));
}

#[test]
fn matrix_compares_models_across_transforms() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = serde_json::json!({
        "base": {
            "data": {"type": "synthetic", "n_rows": 1200, "positive_rate": 0.05, "n_informative": 4},
            "evaluation": {"importance": false},
            "seed": 3,
            "output_dir": "matrix_out",
        },
        "models": [
            {"type": "bbc", "n_estimators": 15},
            {"type": "dummy"},
        ],
        "transforms": ["robust", "log-standard"],
    });
    let path = dir.path().join("matrix.json");
    std::fs::write(&path, serde_json::to_string(&matrix).unwrap()).unwrap();

    let out = backorder(&["matrix", "--config", path.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics =
        std::fs::read_to_string(dir.path().join("matrix_out").join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 5, "{metrics}"); // header + 4 rows
    assert!(lines[1].starts_with("bbc,robust"));
    assert!(lines[2].starts_with("bbc,log-standard"));
    assert!(lines[3].starts_with("dummy,robust"));
}

#[test]
fn seed_override_and_env_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());

    let out = Command::new(env!("CARGO_BIN_EXE_backorder"))
        .args(["train", "--config", config.to_str().unwrap(), "--seed", "42"])
        .current_dir(dir.path())
        .env("BACKORDER_OUT", "env_out")
        .env("BACKORDER_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("env_out").join("report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["provenance"]["seed"], 42);
}

#[test]
fn failures_exit_nonzero_with_stage_context() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "data": {"type": "csv", "path": "missing.csv"},
    });
    let path = dir.path().join("bad.json");
    std::fs::write(&path, serde_json::to_string(&config).unwrap()).unwrap();
    let out = backorder(
        &["train", "--config", path.to_str().unwrap(), "--out", "x"],
        dir.path(),
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stage load"), "{stderr}");

    // unknown config keys are rejected
    let bad_key = dir.path().join("bad_key.json");
    std::fs::write(&bad_key, "{\"no_such_key\": 1}").unwrap();
    let out = backorder(
        &["train", "--config", bad_key.to_str().unwrap(), "--out", "y"],
        dir.path(),
    );
    assert!(!out.status.success());
}
