//! Training, evaluation, and economic scoring of classifiers for severely
//! imbalanced backorder prediction.
//!
//! The crate covers the full experiment loop: loading or synthesising the
//! inventory dataset, iterative imputation and scaling, SMOTE oversampling,
//! balanced-bagging and random-forest ensembles over CART trees, a small
//! dense-network stack (VAE feature augmentation and an MLP classifier),
//! imbalance-aware metrics, a profit/misclassification-cost model, and
//! permutation importance. [`pipeline`] wires the stages into reproducible,
//! configuration-driven experiment runs.

pub mod dataset;
pub mod economics;
pub mod error;
pub mod evaluate;
pub mod interpret;
pub mod model;
pub mod neural;
pub mod pipeline;
pub mod preprocess;
pub mod stats;
pub mod tree;

pub use error::{Error, Result};
pub use model::Classifier;

/// Derives a child seed from a master seed and a stream label, so that every
/// randomised stage of a run draws from its own counter-split stream.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64; // FNV-1a
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(master ^ h)
}

/// Mixes integers into a child seed (e.g. per grid point, per fold).
pub fn mix_seed(master: u64, parts: &[u64]) -> u64 {
    let mut s = splitmix64(master);
    for &p in parts {
        s = splitmix64(s ^ p.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    s
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
