//! The probability-classifier interface shared by ensembles, the MLP, and
//! baselines, plus the dummy baseline itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

/// Anything that can score rows with a probability of class 1 (backorder).
pub trait Classifier: Send + Sync {
    /// Per-row probability of class 1.
    fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>>;

    /// Expected feature count, or `None` if the model ignores features.
    fn input_dim(&self) -> Option<usize>;
}

/// Hard labels at a threshold; ties at exactly the threshold go to class 1.
pub fn predict_labels(probs: &[f64], threshold: f64) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p >= threshold)).collect()
}

/// Feature-blind baseline: either a seeded uniform probability per row or a
/// constant probability (the constant-0.5 mode gives a Brier score of
/// exactly 0.25 on any labels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum DummyClassifier {
    Uniform { seed: u64 },
    Constant { probability: f64 },
}

impl DummyClassifier {
    pub fn uniform(seed: u64) -> Self {
        DummyClassifier::Uniform { seed }
    }

    pub fn constant(probability: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(Error::Argument(format!(
                "constant probability must lie in [0,1], got {probability}"
            )));
        }
        Ok(DummyClassifier::Constant { probability })
    }
}

impl Classifier for DummyClassifier {
    fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        match self {
            DummyClassifier::Uniform { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..x.n_rows()).map(|_| rng.random::<f64>()).collect())
            }
            DummyClassifier::Constant { probability } => Ok(vec![*probability; x.n_rows()]),
        }
    }

    fn input_dim(&self) -> Option<usize> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: usize) -> FeatureMatrix {
        FeatureMatrix::from_columns(vec!["a".into()], vec![vec![0.0; rows]]).unwrap()
    }

    #[test]
    fn uniform_dummy_is_deterministic() {
        let d = DummyClassifier::uniform(3);
        let x = matrix(20);
        assert_eq!(d.predict_proba(&x).unwrap(), d.predict_proba(&x).unwrap());
    }

    #[test]
    fn constant_dummy_emits_constant() {
        let d = DummyClassifier::constant(0.5).unwrap();
        let probs = d.predict_proba(&matrix(4)).unwrap();
        assert_eq!(probs, vec![0.5; 4]);
        assert!(DummyClassifier::constant(1.5).is_err());
    }

    #[test]
    fn threshold_tie_goes_to_class_one() {
        assert_eq!(predict_labels(&[0.5, 0.49, 0.51], 0.5), vec![1, 0, 1]);
    }
}
