//! Bagged tree ensembles: balanced bagging (per-bag majority undersampling
//! to class parity) and plain random forests, both with random feature
//! patches and seed-deterministic per-bag RNG streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::tree::{fit_tree_with_rng, Tree, TreeConfig};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub n_estimators: usize,
    /// Per-tree feature patch size as a fraction of the feature count.
    pub max_features: f64,
    /// Sample bag rows with replacement.
    pub bootstrap: bool,
    /// Sample the feature patch with replacement.
    pub bootstrap_features: bool,
    /// Undersample the majority class to parity within each bag.
    pub balanced: bool,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n_estimators: 200,
            max_features: 1.0,
            bootstrap: true,
            bootstrap_features: false,
            balanced: true,
            max_depth: None,
            min_leaf: 1,
            seed: 0,
        }
    }
}

impl EnsembleConfig {
    fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::Argument("n_estimators must be at least 1".into()));
        }
        if !(self.max_features > 0.0 && self.max_features <= 1.0) {
            return Err(Error::Argument(format!(
                "max_features must lie in (0,1], got {}",
                self.max_features
            )));
        }
        if self.min_leaf == 0 {
            return Err(Error::Argument("min_leaf must be at least 1".into()));
        }
        Ok(())
    }

    pub fn patch_size(&self, n_features: usize) -> usize {
        ((self.max_features * n_features as f64).ceil() as usize).clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    BalancedBagging,
    RandomForest,
}

/// A collection of fitted trees with their per-tree feature patches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggedEnsemble {
    pub version: u32,
    pub kind: EnsembleKind,
    pub config: EnsembleConfig,
    pub classes: [u8; 2],
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub feature_patches: Vec<Vec<usize>>,
    pub trees: Vec<Tree>,
}

/// The balanced bag for one tree: all minority rows (or a same-size
/// bootstrap of them) plus an equal-size sample of majority rows. Row ids
/// index into `x`/`y`; sampling happens over positions of `train_rows` so
/// that rows outside the train set can never be drawn.
pub fn balanced_bag_rows(
    y: &[u8],
    train_rows: &[usize],
    bootstrap: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let minority_label = minority_label(y, train_rows)?;
    let (minority, majority): (Vec<usize>, Vec<usize>) = train_rows
        .iter()
        .partition(|&&i| y[i] == minority_label);
    let k = minority.len();
    let mut bag = Vec::with_capacity(2 * k);
    if bootstrap {
        for _ in 0..k {
            bag.push(minority[rand::Rng::random_range(rng, 0..k)]);
        }
        for _ in 0..k {
            bag.push(majority[rand::Rng::random_range(rng, 0..majority.len())]);
        }
    } else {
        bag.extend_from_slice(&minority);
        let picks = rand::seq::index::sample(rng, majority.len(), k.min(majority.len()));
        bag.extend(picks.into_iter().map(|p| majority[p]));
    }
    Ok(bag)
}

/// A plain bootstrap bag over the train rows (or the rows themselves when
/// `bootstrap` is false).
pub fn bootstrap_bag_rows(train_rows: &[usize], bootstrap: bool, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if bootstrap {
        let n = train_rows.len();
        (0..n)
            .map(|_| train_rows[rand::Rng::random_range(rng, 0..n)])
            .collect()
    } else {
        train_rows.to_vec()
    }
}

/// Draws a feature patch of exactly `size` indices out of `n_features`,
/// with or without replacement, sorted ascending.
pub fn feature_patch(
    n_features: usize,
    size: usize,
    with_replacement: bool,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut patch: Vec<usize> = if with_replacement {
        (0..size)
            .map(|_| rand::Rng::random_range(rng, 0..n_features))
            .collect()
    } else {
        rand::seq::index::sample(rng, n_features, size.min(n_features)).into_vec()
    };
    patch.sort_unstable();
    patch
}

fn minority_label(y: &[u8], train_rows: &[usize]) -> Result<u8> {
    let pos = train_rows.iter().filter(|&&i| y[i] == 1).count();
    let neg = train_rows.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate(
            "both classes must be present in the train rows".into(),
        ));
    }
    Ok(if pos <= neg { 1 } else { 0 })
}

/// Fits a balanced bagging ensemble: every bag holds equal class counts by
/// construction, each tree sees its own feature patch, and per-bag RNG
/// streams are split off the master seed by bag index.
pub fn fit_balanced_bagging(
    x: &FeatureMatrix,
    y: &[u8],
    train_rows: &[usize],
    config: &EnsembleConfig,
) -> Result<BaggedEnsemble> {
    config.validate()?;
    minority_label(y, train_rows)?; // both classes present
    let patch_size = config.patch_size(x.n_features());
    let tree_config = TreeConfig {
        max_depth: config.max_depth,
        min_leaf: config.min_leaf,
        per_split_features: None,
    };
    let fitted: Result<Vec<(Vec<usize>, Tree)>> = (0..config.n_estimators)
        .into_par_iter()
        .map(|bag_idx| {
            let mut rng = bag_rng(config.seed, bag_idx);
            let bag = balanced_bag_rows(y, train_rows, config.bootstrap, &mut rng)?;
            debug_assert!(bag_is_balanced(y, &bag));
            let patch = feature_patch(
                x.n_features(),
                patch_size,
                config.bootstrap_features,
                &mut rng,
            );
            let tree = fit_tree_with_rng(x, y, &bag, &patch, &tree_config, &mut rng)?;
            Ok((patch, tree))
        })
        .collect();
    let fitted = fitted?;
    let (feature_patches, trees) = fitted.into_iter().unzip();
    Ok(BaggedEnsemble {
        version: MODEL_FORMAT_VERSION,
        kind: EnsembleKind::BalancedBagging,
        config: *config,
        classes: [0, 1],
        n_features: x.n_features(),
        feature_names: x.names().to_vec(),
        feature_patches,
        trees,
    })
}

fn bag_is_balanced(y: &[u8], bag: &[usize]) -> bool {
    let pos = bag.iter().filter(|&&i| y[i] == 1).count();
    pos * 2 == bag.len()
}

/// Fits a random forest: plain bootstrap bags of the full train set, all
/// features available per tree, and per-split subsampling of
/// ceil(sqrt(n_features)) candidates (all features when max_features = 1).
pub fn fit_random_forest(
    x: &FeatureMatrix,
    y: &[u8],
    train_rows: &[usize],
    config: &EnsembleConfig,
) -> Result<BaggedEnsemble> {
    config.validate()?;
    minority_label(y, train_rows)?;
    if train_rows.is_empty() {
        return Err(Error::Argument("empty train set".into()));
    }
    let all_features: Vec<usize> = (0..x.n_features()).collect();
    let per_split = if config.max_features >= 1.0 {
        None
    } else {
        Some(((x.n_features() as f64).sqrt().ceil() as usize).clamp(1, x.n_features()))
    };
    let tree_config = TreeConfig {
        max_depth: config.max_depth,
        min_leaf: config.min_leaf,
        per_split_features: per_split,
    };
    let fitted: Result<Vec<(Vec<usize>, Tree)>> = (0..config.n_estimators)
        .into_par_iter()
        .map(|bag_idx| {
            let mut rng = bag_rng(config.seed, bag_idx);
            let bag = bootstrap_bag_rows(train_rows, config.bootstrap, &mut rng);
            let tree = fit_tree_with_rng(x, y, &bag, &all_features, &tree_config, &mut rng)?;
            Ok((all_features.clone(), tree))
        })
        .collect();
    let fitted = fitted?;
    let (feature_patches, trees) = fitted.into_iter().unzip();
    Ok(BaggedEnsemble {
        version: MODEL_FORMAT_VERSION,
        kind: EnsembleKind::RandomForest,
        config: *config,
        classes: [0, 1],
        n_features: x.n_features(),
        feature_names: x.names().to_vec(),
        feature_patches,
        trees,
    })
}

fn bag_rng(seed: u64, bag_idx: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(bag_idx as u64 + 1);
    rng
}

impl BaggedEnsemble {
    /// Mean over trees of the leaf class-1 fraction.
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.n_features() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.n_features(),
            });
        }
        let m = self.trees.len() as f64;
        let probs: Vec<f64> = (0..x.n_rows())
            .into_par_iter()
            .map(|row| {
                let sum: f64 = self
                    .trees
                    .iter()
                    .map(|t| t.predict_proba_row(x, row))
                    .sum();
                sum / m
            })
            .collect();
        Ok(probs)
    }

    /// Majority-vote tally: per row, the number of trees voting for each
    /// class at threshold 1/2, with the winning label (ties to class 1).
    pub fn vote_counts(&self, x: &FeatureMatrix, row: usize) -> [usize; 2] {
        let mut votes = [0usize; 2];
        for tree in &self.trees {
            let p = tree.predict_proba_row(x, row);
            votes[usize::from(p >= 0.5)] += 1;
        }
        votes
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let e: BaggedEnsemble = serde_json::from_str(text)?;
        if e.version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                expected: MODEL_FORMAT_VERSION,
                found: e.version,
            });
        }
        Ok(e)
    }
}

impl Classifier for BaggedEnsemble {
    fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        BaggedEnsemble::predict_proba(self, x)
    }

    fn input_dim(&self) -> Option<usize> {
        Some(self.n_features)
    }
}
