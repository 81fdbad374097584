//! CART binary classification trees: greedy recursive splitting on the
//! weighted Gini impurity, with candidate thresholds at midpoints between
//! consecutive distinct feature values.

mod ensemble;
mod grid;

pub use ensemble::{
    balanced_bag_rows, bootstrap_bag_rows, feature_patch, fit_balanced_bagging,
    fit_random_forest, BaggedEnsemble, EnsembleConfig, EnsembleKind, MODEL_FORMAT_VERSION,
};
pub use grid::{grid_search_cv, stratified_folds, GridPointScore, GridSearchResult, ParamGrid};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Training row counts per class at this leaf.
        counts: [usize; 2],
    },
}

/// A fitted tree as a flat node array; node 0 is the root. Rows with
/// feature value <= threshold go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    /// Minimum rows in each child of a split.
    pub min_leaf: usize,
    /// When set, each split considers a fresh random sample of this many
    /// features from the candidate pool (random-forest style).
    pub per_split_features: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: None,
            min_leaf: 1,
            per_split_features: None,
        }
    }
}

/// Fits a CART tree on the given rows, considering only `features` as split
/// candidates. Zero-gain splits are taken (a node only becomes a leaf when
/// it is pure, depth-capped, too small, or has no candidate threshold), so
/// patterns like XOR resolve at depth 2.
pub fn fit_tree(
    x: &FeatureMatrix,
    y: &[u8],
    rows: &[usize],
    features: &[usize],
    config: &TreeConfig,
    seed: u64,
) -> Result<Tree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fit_tree_with_rng(x, y, rows, features, config, &mut rng)
}

pub(crate) fn fit_tree_with_rng(
    x: &FeatureMatrix,
    y: &[u8],
    rows: &[usize],
    features: &[usize],
    config: &TreeConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Tree> {
    if rows.is_empty() {
        return Err(Error::Argument("cannot fit a tree on zero rows".into()));
    }
    if x.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            actual: y.len(),
        });
    }
    if features.iter().any(|&f| f >= x.n_features()) {
        return Err(Error::Argument("feature index out of range".into()));
    }
    if config.min_leaf == 0 {
        return Err(Error::Argument("min_leaf must be at least 1".into()));
    }
    let mut builder = TreeBuilder {
        x,
        y,
        features,
        config,
        nodes: Vec::new(),
    };
    let mut rows = rows.to_vec();
    builder.build(&mut rows, 0, rng);
    Ok(Tree {
        nodes: builder.nodes,
    })
}

struct TreeBuilder<'a> {
    x: &'a FeatureMatrix,
    y: &'a [u8],
    features: &'a [usize],
    config: &'a TreeConfig,
    nodes: Vec<TreeNode>,
}

impl TreeBuilder<'_> {
    /// Builds the subtree over `rows`, returning its node index.
    fn build(&mut self, rows: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = class_counts(self.y, rows);
        let pure = counts[0] == 0 || counts[1] == 0;
        let depth_capped = self.config.max_depth.is_some_and(|d| depth >= d);
        let too_small = rows.len() < 2 * self.config.min_leaf;
        if pure || depth_capped || too_small {
            return self.push_leaf(counts);
        }

        let candidate_pool: Vec<usize> = match self.config.per_split_features {
            Some(k) if k < self.features.len() => {
                let mut sampled =
                    rand::seq::index::sample(rng, self.features.len(), k).into_vec();
                sampled.sort_unstable();
                sampled.into_iter().map(|i| self.features[i]).collect()
            }
            _ => self.features.to_vec(),
        };

        let Some(split) = best_split(self.x, self.y, rows, &candidate_pool, self.config.min_leaf)
        else {
            return self.push_leaf(counts);
        };

        // partition rows in place: left block gets values <= threshold
        let column = self.x.column(split.feature);
        let mut lo = 0usize;
        let mut hi = rows.len();
        while lo < hi {
            if column[rows[lo]] <= split.threshold {
                lo += 1;
            } else {
                hi -= 1;
                rows.swap(lo, hi);
            }
        }
        debug_assert_eq!(lo, split.n_left);

        let node = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { counts }); // placeholder
        let (left_rows, right_rows) = rows.split_at_mut(lo);
        let left = self.build(left_rows, depth + 1, rng);
        let right = self.build(right_rows, depth + 1, rng);
        self.nodes[node] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        node
    }

    fn push_leaf(&mut self, counts: [usize; 2]) -> usize {
        self.nodes.push(TreeNode::Leaf { counts });
        self.nodes.len() - 1
    }
}

struct SplitCandidate {
    feature: usize,
    threshold: f64,
    n_left: usize,
}

/// Finds the split minimising the weighted child Gini impurity; the first
/// candidate (feature order, ascending thresholds) wins ties.
fn best_split(
    x: &FeatureMatrix,
    y: &[u8],
    rows: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<SplitCandidate> {
    let n = rows.len();
    let total = class_counts(y, rows);
    let mut best: Option<(f64, SplitCandidate)> = None;
    let mut sorted: Vec<usize> = Vec::with_capacity(n);
    for &feature in features {
        let column = x.column(feature);
        sorted.clear();
        sorted.extend_from_slice(rows);
        sorted.sort_by(|&a, &b| column[a].total_cmp(&column[b]));

        let mut left = [0usize; 2];
        for w in 0..n - 1 {
            let row = sorted[w];
            left[self_class(y[row])] += 1;
            let v = column[row];
            let v_next = column[sorted[w + 1]];
            if v == v_next {
                continue;
            }
            let n_left = w + 1;
            let n_right = n - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let score = (n_left as f64 * gini(left) + n_right as f64 * gini(right)) / n as f64;
            let better = match &best {
                Some((best_score, _)) => score < *best_score,
                None => true,
            };
            if better {
                best = Some((
                    score,
                    SplitCandidate {
                        feature,
                        threshold: midpoint(v, v_next),
                        n_left,
                    },
                ));
            }
        }
    }
    best.map(|(_, c)| c)
}

#[inline]
fn self_class(y: u8) -> usize {
    usize::from(y == 1)
}

fn class_counts(y: &[u8], rows: &[usize]) -> [usize; 2] {
    let mut counts = [0usize; 2];
    for &r in rows {
        counts[self_class(y[r])] += 1;
    }
    counts
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = counts[0] as f64 / n;
    let p1 = counts[1] as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

/// Threshold between two consecutive distinct values; falls back to the
/// lower value if the midpoint rounds onto the upper one.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

impl Tree {
    /// Fraction of class-1 training rows in the leaf this row lands in.
    pub fn predict_proba_row(&self, x: &FeatureMatrix, row: usize) -> f64 {
        let mut node = 0usize;
        loop {
            match self.nodes[node] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x.value(row, feature) <= threshold {
                        left
                    } else {
                        right
                    };
                }
                TreeNode::Leaf { counts } => {
                    let n = counts[0] + counts[1];
                    return counts[1] as f64 / n as f64;
                }
            }
        }
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Vec<f64> {
        (0..x.n_rows()).map(|i| self.predict_proba_row(x, i)).collect()
    }

    /// Feature indices used by at least one split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut used: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .collect();
        used.sort_unstable();
        used.dedup();
        used
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}
