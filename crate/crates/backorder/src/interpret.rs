//! Permutation importance: the drop in a performance metric when one
//! feature column is shuffled, averaged over repeats with its standard
//! deviation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::evaluate::{pr_auc, roc_auc};
use crate::model::Classifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImportanceMetric {
    #[default]
    RocAuc,
    PrAuc,
}

impl ImportanceMetric {
    pub fn name(&self) -> &'static str {
        match self {
            ImportanceMetric::RocAuc => "roc_auc",
            ImportanceMetric::PrAuc => "pr_auc",
        }
    }

    fn score(&self, y: &[u8], probs: &[f64]) -> Result<f64> {
        match self {
            ImportanceMetric::RocAuc => roc_auc(y, probs),
            ImportanceMetric::PrAuc => pr_auc(y, probs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    /// Mean of (baseline - permuted score) across repeats.
    pub mean_drop: f64,
    /// Sample standard deviation across repeats; absent for repeats < 2.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_dev: Option<f64>,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub metric: String,
    pub baseline_score: f64,
    pub repeats: usize,
    /// Sorted by mean_drop descending (ties keep feature order).
    pub features: Vec<FeatureImportance>,
}

/// Shuffles each feature column of the evaluation rows `repeats` times
/// (one RNG stream per (feature, repeat) pair, split from `seed`) and
/// measures the metric drop against the unpermuted baseline. The input
/// matrix is never mutated.
pub fn permutation_importance(
    model: &dyn Classifier,
    x: &FeatureMatrix,
    y: &[u8],
    eval_rows: &[usize],
    metric: ImportanceMetric,
    repeats: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    if repeats == 0 {
        return Err(Error::Argument("repeats must be at least 1".into()));
    }
    if eval_rows.is_empty() {
        return Err(Error::Argument("no evaluation rows".into()));
    }
    if let Some(dim) = model.input_dim() {
        if dim != x.n_features() {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: x.n_features(),
            });
        }
    }
    let x_eval = x.select_rows(eval_rows);
    let y_eval: Vec<u8> = eval_rows.iter().map(|&i| y[i]).collect();
    let baseline_score = metric.score(&y_eval, &model.predict_proba(&x_eval)?)?;

    let per_feature: Result<Vec<FeatureImportance>> = (0..x_eval.n_features())
        .into_par_iter()
        .map(|f| {
            let mut drops = Vec::with_capacity(repeats);
            for r in 0..repeats {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((f * repeats + r) as u64 + 1);
                let mut column = x_eval.column(f).to_vec();
                column.shuffle(&mut rng);
                let permuted = x_eval.with_column(f, column);
                let score = metric.score(&y_eval, &model.predict_proba(&permuted)?)?;
                drops.push(baseline_score - score);
            }
            let mean = drops.iter().sum::<f64>() / repeats as f64;
            let std_dev = if repeats >= 2 {
                let var = drops.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
                    / (repeats - 1) as f64;
                Some(var.sqrt())
            } else {
                None
            };
            Ok(FeatureImportance {
                feature: x_eval.names()[f].clone(),
                mean_drop: mean,
                std_dev,
                repeats,
            })
        })
        .collect();
    let mut features = per_feature?;
    features.sort_by(|a, b| b.mean_drop.total_cmp(&a.mean_drop));

    Ok(ImportanceReport {
        metric: metric.name().to_string(),
        baseline_score,
        repeats,
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{fit_balanced_bagging, EnsembleConfig};
    use rand::Rng;

    /// Labels depend only on column 0; columns 1 and 2 are noise.
    fn planted(n: usize, seed: u64) -> (FeatureMatrix, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signal: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<u8> = signal.iter().map(|&v| u8::from(v > 0.7)).collect();
        let noise1: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let noise2: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let x = FeatureMatrix::from_columns(
            vec!["signal".into(), "noise1".into(), "noise2".into()],
            vec![signal, noise1, noise2],
        )
        .unwrap();
        (x, y)
    }

    #[test]
    fn planted_signal_ranks_first() {
        let (x, y) = planted(600, 1);
        let rows: Vec<usize> = (0..y.len()).collect();
        let config = EnsembleConfig {
            n_estimators: 30,
            seed: 0,
            ..EnsembleConfig::default()
        };
        let model = fit_balanced_bagging(&x, &y, &rows, &config).unwrap();
        let eval: Vec<usize> = (0..y.len()).collect();
        let report =
            permutation_importance(&model, &x, &y, &eval, ImportanceMetric::RocAuc, 10, 3)
                .unwrap();
        assert_eq!(report.features[0].feature, "signal");
        assert!(
            report.features[0].mean_drop > report.features[1].mean_drop,
            "{report:?}"
        );
        assert!(report.features[0].std_dev.is_some());
    }

    #[test]
    fn unused_feature_has_exactly_zero_drop() {
        // a feature the trees never split on leaves predictions unchanged
        let (x, y) = planted(200, 2);
        let rows: Vec<usize> = (0..y.len()).collect();
        // constant extra column can never host a split
        let x_wide = x
            .append_columns(vec!["constant".into()], vec![vec![5.0; x.n_rows()]])
            .unwrap();
        let config = EnsembleConfig {
            n_estimators: 10,
            seed: 1,
            ..EnsembleConfig::default()
        };
        let model = fit_balanced_bagging(&x_wide, &y, &rows, &config).unwrap();
        for tree in &model.trees {
            assert!(!tree.used_features().contains(&3));
        }
        let report =
            permutation_importance(&model, &x_wide, &y, &rows, ImportanceMetric::RocAuc, 5, 7)
                .unwrap();
        let constant = report
            .features
            .iter()
            .find(|f| f.feature == "constant")
            .unwrap();
        assert_eq!(constant.mean_drop, 0.0);
        assert_eq!(constant.std_dev, Some(0.0));
    }

    #[test]
    fn table_is_not_mutated_and_result_is_deterministic() {
        let (x, y) = planted(300, 4);
        let rows: Vec<usize> = (0..y.len()).collect();
        let config = EnsembleConfig {
            n_estimators: 15,
            seed: 2,
            ..EnsembleConfig::default()
        };
        let model = fit_balanced_bagging(&x, &y, &rows, &config).unwrap();
        let before = x.clone();
        let a = permutation_importance(&model, &x, &y, &rows, ImportanceMetric::RocAuc, 4, 9)
            .unwrap();
        assert_eq!(x, before);
        // identical report regardless of thread count
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool
            .install(|| {
                permutation_importance(&model, &x, &y, &rows, ImportanceMetric::RocAuc, 4, 9)
            })
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn argument_errors() {
        let (x, y) = planted(50, 5);
        let rows: Vec<usize> = (0..y.len()).collect();
        let config = EnsembleConfig {
            n_estimators: 3,
            seed: 3,
            ..EnsembleConfig::default()
        };
        let model = fit_balanced_bagging(&x, &y, &rows, &config).unwrap();
        assert!(
            permutation_importance(&model, &x, &y, &rows, ImportanceMetric::RocAuc, 0, 0)
                .is_err()
        );
        // model trained on 3 features, matrix with 2: input space mismatch
        let narrow = FeatureMatrix::from_columns(
            vec!["a".into(), "b".into()],
            vec![x.column(0).to_vec(), x.column(1).to_vec()],
        )
        .unwrap();
        assert!(
            permutation_importance(&model, &narrow, &y, &rows, ImportanceMetric::RocAuc, 2, 0)
                .is_err()
        );
    }

    #[test]
    fn single_repeat_reports_no_std_dev() {
        let (x, y) = planted(100, 6);
        let rows: Vec<usize> = (0..y.len()).collect();
        let config = EnsembleConfig {
            n_estimators: 5,
            seed: 4,
            ..EnsembleConfig::default()
        };
        let model = fit_balanced_bagging(&x, &y, &rows, &config).unwrap();
        let report =
            permutation_importance(&model, &x, &y, &rows, ImportanceMetric::PrAuc, 1, 0).unwrap();
        assert!(report.features.iter().all(|f| f.std_dev.is_none()));
        assert_eq!(report.metric, "pr_auc");
    }
}
