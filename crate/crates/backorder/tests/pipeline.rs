//! End-to-end pipeline behaviour: artifact output, reproducibility, the
//! leakage audit, matrix runs, and saved-model round trips.

use backorder::dataset::{generate_synthetic, split, SyntheticSpec};
use backorder::pipeline::{
    evaluate_saved, prepare_to_dir, run_experiment, run_model_matrix, BbcSettings, DataSource,
    MatrixConfig, MlpSettings, ModelSpec, Resampling, RunConfig, SmoteSettings, SyntheticDataSpec,
    VaeSettings,
};
use backorder::preprocess::{fit_iterative_imputer, fit_transform, ImputerSettings, TransformKind};

fn small_config(model: ModelSpec, seed: u64, out: &std::path::Path) -> RunConfig {
    let mut config = RunConfig::from_json("{}").unwrap();
    config.data = DataSource::Synthetic(SyntheticDataSpec {
        n_rows: 2000,
        positive_rate: 0.05,
        n_informative: 4,
    });
    config.model = model;
    config.seed = seed;
    config.output_dir = out.to_path_buf();
    config.evaluation.importance_repeats = 3;
    config
}

fn small_bbc() -> ModelSpec {
    ModelSpec::Bbc(BbcSettings {
        n_estimators: 25,
        ..BbcSettings::default()
    })
}

#[test]
fn run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(small_bbc(), 1, dir.path());
    let report = run_experiment(&config).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert!(report.rows[0].error.is_none());
    for file in [
        "config.json",
        "report.json",
        "metrics.csv",
        "economics.csv",
        "screening.csv",
        "screening.json",
        "importance.csv",
        "importance.json",
        "roc_curve.csv",
        "pr_curve.csv",
        "model.json",
        "transform.json",
        "imputer.json",
        "split.json",
    ] {
        assert!(dir.path().join(file).exists(), "missing {file}");
    }
    // the full metric bundle plus both economics values are present
    let metrics = report.rows[0].metrics.as_ref().unwrap();
    for v in [
        metrics.roc_auc,
        metrics.pr_auc,
        metrics.macro_f1,
        metrics.precision,
        metrics.recall,
        metrics.mcc,
        metrics.brier,
    ] {
        assert!(v.is_finite());
    }
    let econ = report.rows[0].economics.as_ref().unwrap();
    assert!(econ.optimal_profit.is_finite());
    assert!(econ.misclassification_cost >= 0.0);
}

#[test]
fn identical_configs_give_byte_identical_reports() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let config_a = small_config(small_bbc(), 7, dir_a.path());
    let mut config_b = small_config(small_bbc(), 7, dir_b.path());
    config_b.output_dir = dir_b.path().to_path_buf();
    run_experiment(&config_a).unwrap();
    run_experiment(&config_b).unwrap();

    // reports are identical once the timestamp is zeroed
    let normalise = |dir: &std::path::Path| {
        let text = std::fs::read_to_string(dir.join("report.json")).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["provenance"]["started_unix_ms"] = 0.into();
        // the config hash covers output_dir, which differs by tempdir
        v["provenance"]["config_hash"] = "".into();
        serde_json::to_string(&v).unwrap()
    };
    assert_eq!(normalise(dir_a.path()), normalise(dir_b.path()));
    for file in ["metrics.csv", "economics.csv", "screening.csv", "importance.csv"] {
        let a = std::fs::read(dir_a.path().join(file)).unwrap();
        let b = std::fs::read(dir_b.path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
}

/// Deleting the test rows before fitting must change no fitted parameter.
#[test]
fn no_test_leakage_into_fitted_parameters() {
    let spec = SyntheticSpec {
        n_rows: 1500,
        positive_rate: 0.05,
        n_informative: 4,
        seed: 3,
    };
    let table = generate_synthetic(&spec).unwrap();
    let s = split(&table, 0.8, 11, true).unwrap();

    // the same train rows, with the test rows physically removed
    let train_only = table.select_rows(&s.train);
    let train_idx_full: &[usize] = &s.train;
    let train_idx_reduced: Vec<usize> = (0..s.train.len()).collect();

    let imputer_full =
        fit_iterative_imputer(&table, train_idx_full, &ImputerSettings::default()).unwrap();
    let imputer_reduced =
        fit_iterative_imputer(&train_only, &train_idx_reduced, &ImputerSettings::default())
            .unwrap();
    assert_eq!(imputer_full, imputer_reduced);

    let imputed_full = imputer_full.apply(&table).unwrap();
    let imputed_reduced = imputer_reduced.apply(&train_only).unwrap();
    for kind in [
        TransformKind::Robust,
        TransformKind::LogStandard,
        TransformKind::Quantile,
        TransformKind::Standard,
    ] {
        let numeric = imputed_full.numeric_indices();
        let a = fit_transform(kind, &imputed_full, train_idx_full, &numeric).unwrap();
        let b = fit_transform(kind, &imputed_reduced, &train_idx_reduced, &numeric).unwrap();
        assert_eq!(a, b, "kind {kind:?}");
    }

    // model fits sample positions of the train set only: identical trees
    let x_full = imputed_full.to_features().unwrap();
    let y_full = imputed_full.labels();
    let x_reduced = imputed_reduced.to_features().unwrap();
    let y_reduced = imputed_reduced.labels();
    let config = backorder::tree::EnsembleConfig {
        n_estimators: 10,
        seed: 5,
        ..backorder::tree::EnsembleConfig::default()
    };
    let full = backorder::tree::fit_balanced_bagging(&x_full, &y_full, train_idx_full, &config)
        .unwrap();
    let reduced =
        backorder::tree::fit_balanced_bagging(&x_reduced, &y_reduced, &train_idx_reduced, &config)
            .unwrap();
    assert_eq!(full.trees, reduced.trees);
    assert_eq!(full.feature_patches, reduced.feature_patches);
}

#[test]
fn matrix_rows_follow_config_order_and_bbc_outranks_dummy() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = small_config(small_bbc(), 13, dir.path());
    base.evaluation.importance = false;
    let matrix = MatrixConfig {
        base,
        models: vec![small_bbc(), ModelSpec::Dummy { constant: None }],
        transforms: vec![TransformKind::Robust, TransformKind::LogStandard],
    };
    let configs = matrix.expand();
    assert_eq!(configs.len(), 4);
    let report = run_model_matrix(&configs).unwrap();
    assert_eq!(report.rows.len(), 4);
    assert_eq!(report.rows[0].model, "bbc");
    assert_eq!(report.rows[0].transform, "robust");
    assert_eq!(report.rows[1].transform, "log-standard");
    assert_eq!(report.rows[2].model, "dummy");
    // bbc outranks dummy on ROC-AUC in every transform regime
    for offset in 0..2 {
        let bbc = report.rows[offset].metrics.as_ref().unwrap().roc_auc;
        let dummy = report.rows[2 + offset].metrics.as_ref().unwrap().roc_auc;
        assert!(bbc > dummy, "transform {offset}: {bbc} vs {dummy}");
    }
    assert!(!report.screening.is_empty());
}

#[test]
fn matrix_records_partial_failures_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let good = small_config(small_bbc(), 17, dir.path());
    let mut bad = good.clone();
    // SMOTE with k larger than the minority class cannot run
    bad.resampling = Resampling::Smote(SmoteSettings {
        k_neighbors: 100_000,
        target_ratio: 0.5,
    });
    let report = run_model_matrix(&[bad, good]).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert!(report.rows[0].error.is_some());
    assert!(report.rows[0].metrics.is_none());
    assert!(report.rows[1].error.is_none());
}

#[test]
fn vae_bbc_and_mlp_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let model = ModelSpec::VaeBbc {
        vae: VaeSettings {
            latent_dim: 4,
            hidden_dim: 8,
            epochs: 3,
            batch_size: 64,
            learning_rate: 1e-3,
        },
        bbc: BbcSettings {
            n_estimators: 15,
            ..BbcSettings::default()
        },
    };
    let mut config = small_config(model, 19, dir.path());
    config.evaluation.importance_repeats = 2;
    let report = run_experiment(&config).unwrap();
    let metrics = report.rows[0].metrics.as_ref().unwrap();
    assert!(metrics.roc_auc > 0.5, "vae_bbc roc {}", metrics.roc_auc);
    // importance runs over the original feature space, not the latent one
    let importance = report.importance.as_ref().unwrap();
    assert!(importance.features.iter().all(|f| !f.feature.starts_with("latent_")));

    let dir2 = tempfile::tempdir().unwrap();
    let mlp = ModelSpec::Mlp(MlpSettings {
        hidden_sizes: vec![16],
        epochs: 8,
        ..MlpSettings::default()
    });
    let mut config = small_config(mlp, 23, dir2.path());
    config.resampling = Resampling::Smote(SmoteSettings::default());
    let report = run_experiment(&config).unwrap();
    assert!(report.rows[0].metrics.is_some());
}

#[test]
fn tuned_bbc_searches_the_grid_before_fitting() {
    let dir = tempfile::tempdir().unwrap();
    let model = ModelSpec::Bbc(BbcSettings {
        n_estimators: 20,
        tune: true,
        folds: 3,
        ..BbcSettings::default()
    });
    let mut config = small_config(model, 47, dir.path());
    config.data = DataSource::Synthetic(SyntheticDataSpec {
        n_rows: 1200,
        positive_rate: 0.06,
        n_informative: 4,
    });
    config.evaluation.importance = false;
    let report = run_experiment(&config).unwrap();
    let metrics = report.rows[0].metrics.as_ref().unwrap();
    assert!(metrics.roc_auc > 0.6, "tuned roc {}", metrics.roc_auc);
    // the tuned ensemble comes from the desk grid, so its size is one of
    // the lattice values
    let model = backorder::pipeline::SavedModel::load(dir.path().join("model.json")).unwrap();
    match model {
        backorder::pipeline::TrainedModel::Bbc(e) => {
            assert!([20, 50, 100].contains(&e.config.n_estimators));
        }
        other => panic!("unexpected model {other:?}"),
    }
}

#[test]
fn saved_model_evaluates_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(small_bbc(), 29, dir.path());
    config.evaluation.importance = false;
    let report = run_experiment(&config).unwrap();
    let trained_metrics = report.rows[0].metrics.clone().unwrap();

    let eval_dir = tempfile::tempdir().unwrap();
    let mut eval_config = config.clone();
    eval_config.output_dir = eval_dir.path().to_path_buf();
    let eval_report = evaluate_saved(dir.path(), &eval_config).unwrap();
    assert_eq!(eval_report.rows[0].metrics.as_ref().unwrap(), &trained_metrics);
}

#[test]
fn prepare_writes_processed_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(small_bbc(), 31, dir.path());
    prepare_to_dir(&config).unwrap();
    for file in [
        "processed_train.csv",
        "processed_test.csv",
        "transform.json",
        "imputer.json",
        "split.json",
        "screening.csv",
    ] {
        assert!(dir.path().join(file).exists(), "missing {file}");
    }
    // processed tables reload cleanly and carry no missing cells
    let train = backorder::dataset::load_csv(
        dir.path().join("processed_train.csv"),
        &backorder::dataset::inventory_schema(),
    )
    .unwrap();
    assert!(!train.has_missing());
}

#[test]
fn csv_source_round_trips_through_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let table = generate_synthetic(&SyntheticSpec {
        n_rows: 1200,
        positive_rate: 0.06,
        n_informative: 4,
        seed: 37,
    })
    .unwrap();
    let csv_path = dir.path().join("data.csv");
    backorder::dataset::write_csv(&table, &csv_path).unwrap();

    let mut config = small_config(small_bbc(), 41, dir.path());
    config.data = DataSource::Csv { path: csv_path };
    config.evaluation.importance = false;
    let report = run_experiment(&config).unwrap();
    assert!(report.rows[0].metrics.is_some());
}

#[test]
fn stage_errors_are_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(small_bbc(), 43, dir.path());
    config.data = DataSource::Csv {
        path: dir.path().join("does_not_exist.csv"),
    };
    let err = run_experiment(&config).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("stage load"), "{msg}");
}
