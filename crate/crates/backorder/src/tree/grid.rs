//! Grid-search cross-validation for the balanced bagging classifier:
//! stratified k-fold over the train rows, scored by ROC-AUC on the held
//! fold, ties broken toward the most parsimonious configuration.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::evaluate::roc_auc;
use crate::mix_seed;
use crate::tree::{fit_balanced_bagging, EnsembleConfig};

/// The hyperparameter lattice searched over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamGrid {
    pub n_estimators: Vec<usize>,
    pub max_features: Vec<f64>,
    pub bootstrap: Vec<bool>,
    pub bootstrap_features: Vec<bool>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        ParamGrid::desk_default()
    }
}

impl ParamGrid {
    /// Desk-scale 3x3 sub-lattice of the full search space.
    pub fn desk_default() -> Self {
        ParamGrid {
            n_estimators: vec![20, 50, 100],
            max_features: vec![0.5, 0.8, 1.0],
            bootstrap: vec![true],
            bootstrap_features: vec![false],
        }
    }

    /// The full 13 x 13 x 2 x 2 = 676-point lattice.
    pub fn full() -> Self {
        ParamGrid {
            n_estimators: vec![
                20, 50, 100, 200, 300, 400, 500, 600, 700, 800, 900, 1000, 1200,
            ],
            max_features: vec![
                0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.85, 0.90, 0.92, 0.95, 1.0,
            ],
            bootstrap: vec![true, false],
            bootstrap_features: vec![true, false],
        }
    }

    /// Expands the lattice into configurations, inheriting depth/min_leaf
    /// from `base`.
    pub fn points(&self, base: &EnsembleConfig) -> Vec<EnsembleConfig> {
        let mut out = Vec::new();
        for &n in &self.n_estimators {
            for &mf in &self.max_features {
                for &b in &self.bootstrap {
                    for &bf in &self.bootstrap_features {
                        out.push(EnsembleConfig {
                            n_estimators: n,
                            max_features: mf,
                            bootstrap: b,
                            bootstrap_features: bf,
                            ..*base
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointScore {
    pub config: EnsembleConfig,
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: EnsembleConfig,
    pub best_mean_score: f64,
    pub scores: Vec<GridPointScore>,
}

/// Deals the train rows into k stratified folds: rows are shuffled within
/// each class and distributed round-robin, so fold class proportions stay
/// within one row of each other.
pub fn stratified_folds(
    y: &[u8],
    train_rows: &[usize],
    folds: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::Argument(format!("folds must be >= 2, got {folds}")));
    }
    if train_rows.len() < folds {
        return Err(Error::Argument(format!(
            "cannot make {folds} folds out of {} rows",
            train_rows.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    for class in [1u8, 0u8] {
        let mut rows: Vec<usize> = train_rows.iter().copied().filter(|&i| y[i] == class).collect();
        rows.shuffle(&mut rng);
        for (k, row) in rows.into_iter().enumerate() {
            out[k % folds].push(row);
        }
    }
    if out.iter().any(|fold| !fold.iter().any(|&i| y[i] == 1)) {
        return Err(Error::Degenerate(format!(
            "a fold has no positive rows; use fewer than {folds} folds"
        )));
    }
    for fold in &mut out {
        fold.sort_unstable();
    }
    Ok(out)
}

/// Trains every grid point on each fold's train part and scores ROC-AUC on
/// the held fold. The best point has the highest mean score; ties prefer
/// fewer estimators, then lower max_features. Per-point seeds derive from
/// the configuration values, so duplicate points score identically.
pub fn grid_search_cv(
    x: &FeatureMatrix,
    y: &[u8],
    train_rows: &[usize],
    grid: &ParamGrid,
    base: &EnsembleConfig,
    folds: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    let points = grid.points(base);
    if points.is_empty() {
        return Err(Error::Argument("empty parameter grid".into()));
    }
    let fold_rows = stratified_folds(y, train_rows, folds, seed)?;
    let fold_splits: Vec<(Vec<usize>, &Vec<usize>)> = (0..folds)
        .map(|k| {
            let train: Vec<usize> = fold_rows
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != k)
                .flat_map(|(_, rows)| rows.iter().copied())
                .collect();
            (train, &fold_rows[k])
        })
        .collect();

    let scores: Result<Vec<GridPointScore>> = points
        .par_iter()
        .map(|config| {
            let mut fold_scores = Vec::with_capacity(folds);
            for (k, (cv_train, held)) in fold_splits.iter().enumerate() {
                let mut fold_config = *config;
                fold_config.seed = point_seed(seed, config, k);
                let model = fit_balanced_bagging(x, y, cv_train, &fold_config)?;
                let x_held = x.select_rows(held);
                let y_held: Vec<u8> = held.iter().map(|&i| y[i]).collect();
                let probs = model.predict_proba(&x_held)?;
                fold_scores.push(roc_auc(&y_held, &probs)?);
            }
            let mean_score = fold_scores.iter().sum::<f64>() / folds as f64;
            Ok(GridPointScore {
                config: *config,
                fold_scores,
                mean_score,
            })
        })
        .collect();
    let scores = scores?;

    let best = scores
        .iter()
        .max_by(|a, b| {
            a.mean_score
                .total_cmp(&b.mean_score)
                .then_with(|| b.config.n_estimators.cmp(&a.config.n_estimators))
                .then_with(|| b.config.max_features.total_cmp(&a.config.max_features))
        })
        .expect("non-empty grid");
    Ok(GridSearchResult {
        best: best.config,
        best_mean_score: best.mean_score,
        scores: scores.clone(),
    })
}

/// Seed for one grid point on one fold, derived from the point's values so
/// that duplicate points behave identically.
fn point_seed(master: u64, config: &EnsembleConfig, fold: usize) -> u64 {
    mix_seed(
        master,
        &[
            config.n_estimators as u64,
            config.max_features.to_bits(),
            u64::from(config.bootstrap),
            u64::from(config.bootstrap_features),
            fold as u64,
        ],
    )
}
