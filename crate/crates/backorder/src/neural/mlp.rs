//! Feedforward MLP classifier: relu hidden layers, a sigmoid output unit,
//! trained on class-weighted binary cross-entropy. The loss and gradients
//! are evaluated on logits to stay finite for extreme activations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::neural::{
    backward_layer, finite_difference_gradient, flatten_layer, forward_cached,
    max_relative_error, sigmoid, softplus, unflatten_layer, Activation, Adam, DenseLayer,
    LayerCache, TrainReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpClassifier {
    /// Relu hidden layers.
    pub hidden: Vec<DenseLayer>,
    /// Single logit unit; the sigmoid is applied at prediction time.
    pub output: DenseLayer,
    pub input_dim: usize,
    /// Positive-class weight used during training.
    pub class_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpTrainOptions {
    pub hidden_sizes: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight multiplying the positive-class loss; `None` uses the train
    /// negative/positive ratio.
    pub class_weight: Option<f64>,
    pub seed: u64,
}

impl Default for MlpTrainOptions {
    fn default() -> Self {
        MlpTrainOptions {
            hidden_sizes: vec![32],
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            class_weight: None,
            seed: 0,
        }
    }
}

const DIVERGENCE_LIMIT: f64 = 1e6;

impl MlpClassifier {
    pub fn new(
        input_dim: usize,
        hidden_sizes: &[usize],
        class_weight: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if hidden_sizes.is_empty() {
            return Err(Error::Argument("hidden_sizes must be non-empty".into()));
        }
        let mut hidden = Vec::with_capacity(hidden_sizes.len());
        let mut prev = input_dim;
        for &size in hidden_sizes {
            if size == 0 {
                return Err(Error::Argument("hidden layer size must be >= 1".into()));
            }
            hidden.push(DenseLayer::random(prev, size, Activation::Relu, rng));
            prev = size;
        }
        let output = DenseLayer::random(prev, 1, Activation::Linear, rng);
        Ok(MlpClassifier {
            hidden,
            output,
            input_dim,
            class_weight,
        })
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        let mut h = x.to_vec();
        for layer in &self.hidden {
            h = layer.forward(&h);
        }
        self.output.forward(&h)[0]
    }

    /// Mean weighted binary cross-entropy over a batch, with the flat
    /// parameter gradient when requested.
    pub fn loss_and_grad(
        &self,
        batch: &[Vec<f64>],
        labels: &[u8],
        want_grad: bool,
    ) -> Result<(f64, Option<Vec<f64>>)> {
        if batch.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        if batch.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: batch.len(),
                actual: labels.len(),
            });
        }
        let b = batch.len() as f64;
        let mut grad = if want_grad {
            Some(vec![0.0; self.param_count()])
        } else {
            None
        };
        let mut total = 0.0;
        for (x, &label) in batch.iter().zip(labels) {
            let y = f64::from(label);
            let w = if label == 1 { self.class_weight } else { 1.0 };
            let mut caches: Vec<LayerCache> = Vec::with_capacity(self.hidden.len());
            let mut h = x.clone();
            for layer in &self.hidden {
                let (out, cache) = forward_cached(layer, &h);
                caches.push(cache);
                h = out;
            }
            let (out, out_cache) = forward_cached(&self.output, &h);
            let logit = out[0];
            if !logit.is_finite() {
                return Err(Error::Degenerate(
                    "non-finite MLP activations; lower the learning rate".into(),
                ));
            }
            // -[w y ln s + (1-y) ln(1-s)] expressed through the logit
            total += w * y * softplus(-logit) + (1.0 - y) * softplus(logit);

            let Some(grad) = grad.as_mut() else { continue };
            let s = sigmoid(logit);
            let d_logit = (w * y * (s - 1.0) + (1.0 - y) * s) / b;
            let mut offset = self.param_count() - self.output.param_count();
            let mut d_h = backward_layer(&self.output, &out_cache, &[d_logit], &mut grad[offset..]);
            for (layer, cache) in self.hidden.iter().zip(&caches).rev() {
                offset -= layer.param_count();
                d_h = backward_layer(layer, cache, &d_h, &mut grad[offset..]);
            }
            debug_assert_eq!(offset, 0);
        }
        Ok((total / b, grad))
    }

    fn param_count(&self) -> usize {
        self.hidden
            .iter()
            .map(DenseLayer::param_count)
            .sum::<usize>()
            + self.output.param_count()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for layer in &self.hidden {
            flatten_layer(layer, &mut flat);
        }
        flatten_layer(&self.output, &mut flat);
        flat
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let mut k = 0;
        for layer in &mut self.hidden {
            k += unflatten_layer(layer, &flat[k..]);
        }
        k += unflatten_layer(&mut self.output, &flat[k..]);
        debug_assert_eq!(k, flat.len());
    }
}

impl Classifier for MlpClassifier {
    fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.n_features() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: x.n_features(),
            });
        }
        Ok((0..x.n_rows())
            .map(|i| sigmoid(self.logit(&x.row(i))))
            .collect())
    }

    fn input_dim(&self) -> Option<usize> {
        Some(self.input_dim)
    }
}

/// Trains an MLP on the given rows with minibatch adaptive-moment descent
/// on weighted binary cross-entropy.
pub fn train_mlp_classifier(
    x: &FeatureMatrix,
    y: &[u8],
    rows: &[usize],
    opts: &MlpTrainOptions,
) -> Result<(MlpClassifier, TrainReport)> {
    if opts.epochs == 0 || opts.batch_size == 0 {
        return Err(Error::Argument(
            "epochs and batch_size must be at least 1".into(),
        ));
    }
    if rows.is_empty() {
        return Err(Error::Argument("no training rows".into()));
    }
    let data: Vec<Vec<f64>> = rows.iter().map(|&i| x.row(i)).collect();
    let labels: Vec<u8> = rows.iter().map(|&i| y[i]).collect();
    let class_weight = match opts.class_weight {
        Some(w) => {
            if w <= 0.0 {
                return Err(Error::Argument(format!(
                    "class_weight must be positive, got {w}"
                )));
            }
            w
        }
        None => {
            let pos = labels.iter().filter(|&&l| l == 1).count();
            let neg = labels.len() - pos;
            if pos == 0 {
                return Err(Error::Degenerate("no positive rows to weight".into()));
            }
            (neg as f64 / pos as f64).max(1.0)
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut model = MlpClassifier::new(x.n_features(), &opts.hidden_sizes, class_weight, &mut rng)?;
    let mut adam = Adam::new(opts.learning_rate, model.param_count());
    let mut params = model.params();

    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..opts.epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for (batch_idx, chunk) in order.chunks(opts.batch_size).enumerate() {
            let batch: Vec<Vec<f64>> = chunk.iter().map(|&i| data[i].clone()).collect();
            let batch_labels: Vec<u8> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grad) = model
                .loss_and_grad(&batch, &batch_labels, true)
                .map_err(|e| match e {
                    Error::Degenerate(msg) => Error::Divergence {
                        epoch,
                        batch: batch_idx,
                        message: msg,
                    },
                    other => other,
                })?;
            if !loss.is_finite() || loss > DIVERGENCE_LIMIT {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_idx,
                    message: format!("loss {loss}; lower the learning rate"),
                });
            }
            if opts.learning_rate > 0.0 {
                adam.step(&mut params, &grad.expect("gradient requested"));
                model.set_params(&params);
            }
        }
        let (epoch_loss, _) = model.loss_and_grad(&data, &labels, false)?;
        epoch_losses.push(epoch_loss);
    }

    // post-training gradient self-check on one batch
    let check_rows = data.len().min(opts.batch_size).min(8);
    let batch: Vec<Vec<f64>> = data[..check_rows].to_vec();
    let batch_labels: Vec<u8> = labels[..check_rows].to_vec();
    let (_, grad) = model.loss_and_grad(&batch, &batch_labels, true)?;
    let analytic = grad.expect("gradient requested");
    let reference = model.clone();
    let numeric = finite_difference_gradient(
        |p| {
            let mut probe = reference.clone();
            probe.set_params(p);
            probe
                .loss_and_grad(&batch, &batch_labels, false)
                .map(|(l, _)| l)
                .unwrap_or(f64::NAN)
        },
        &model.params(),
        1e-5,
    );
    let grad_check_max_rel_error = max_relative_error(&analytic, &numeric);

    Ok((
        model,
        TrainReport {
            epoch_losses,
            epochs: opts.epochs,
            batch_size: opts.batch_size,
            grad_check_max_rel_error,
        },
    ))
}
