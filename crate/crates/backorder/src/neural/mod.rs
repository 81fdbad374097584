//! Minimal dense-network stack with exact backpropagation. Parameters of a
//! whole network flatten into one vector, which keeps the optimiser and the
//! finite-difference gradient check generic over architectures.

mod mlp;
mod vae;

pub use mlp::{train_mlp_classifier, MlpClassifier, MlpTrainOptions};
pub use vae::{
    encode_and_augment, gaussian_kl, train_vae, LossComponents, VaeModel, VaeTrainOptions,
};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Linear,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative as a function of the pre-activation.
    #[inline]
    fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z), evaluated without overflow.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Fully-connected layer: forward(x) = activation(W x + b).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// out x in.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// He-style initialisation: weights uniform with limit sqrt(6 / fan_in),
    /// biases uniform at a tenth of that limit (nonzero so no relu
    /// preactivation starts exactly at the kink).
    pub fn random(
        input_dim: usize,
        output_dim: usize,
        activation: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let limit = (6.0 / input_dim as f64).sqrt();
        let weights = (0..output_dim)
            .map(|_| {
                (0..input_dim)
                    .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * limit)
                    .collect()
            })
            .collect();
        let biases = (0..output_dim)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * limit * 0.1)
            .collect();
        DenseLayer {
            weights,
            biases,
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn output_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.preactivation(input)
            .into_iter()
            .map(|z| self.activation.apply(z))
            .collect()
    }

    fn preactivation(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(row, &b)| row.iter().zip(input).map(|(&w, &x)| w * x).sum::<f64>() + b)
            .collect()
    }

    pub(crate) fn param_count(&self) -> usize {
        self.output_dim() * (self.input_dim() + 1)
    }
}

/// Forward pass keeping what backward needs.
pub(crate) struct LayerCache {
    pub input: Vec<f64>,
    pub preact: Vec<f64>,
}

pub(crate) fn forward_cached(layer: &DenseLayer, input: &[f64]) -> (Vec<f64>, LayerCache) {
    let preact = layer.preactivation(input);
    let output = preact.iter().map(|&z| layer.activation.apply(z)).collect();
    (
        output,
        LayerCache {
            input: input.to_vec(),
            preact,
        },
    )
}

/// Backpropagates `d_output` (dL/d activation) through one layer,
/// accumulating weight/bias gradients into the flat slice `grad` (laid out
/// row-major weights then biases) and returning dL/d input.
pub(crate) fn backward_layer(
    layer: &DenseLayer,
    cache: &LayerCache,
    d_output: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    let in_dim = layer.input_dim();
    let out_dim = layer.output_dim();
    let mut d_input = vec![0.0; in_dim];
    for o in 0..out_dim {
        let dz = d_output[o] * layer.activation.derivative(cache.preact[o]);
        let row = &layer.weights[o];
        let grad_row = &mut grad[o * in_dim..(o + 1) * in_dim];
        for i in 0..in_dim {
            grad_row[i] += dz * cache.input[i];
            d_input[i] += dz * row[i];
        }
        grad[out_dim * in_dim + o] += dz;
    }
    d_input
}

/// Copies a layer's parameters into `out` (weights row-major, then biases).
pub(crate) fn flatten_layer(layer: &DenseLayer, out: &mut Vec<f64>) {
    for row in &layer.weights {
        out.extend_from_slice(row);
    }
    out.extend_from_slice(&layer.biases);
}

/// Restores a layer's parameters from a flat slice; returns how many values
/// were consumed.
pub(crate) fn unflatten_layer(layer: &mut DenseLayer, flat: &[f64]) -> usize {
    let in_dim = layer.input_dim();
    let mut k = 0;
    for row in &mut layer.weights {
        row.copy_from_slice(&flat[k..k + in_dim]);
        k += in_dim;
    }
    let out_dim = layer.biases.len();
    layer.biases.copy_from_slice(&flat[k..k + out_dim]);
    k + out_dim
}

/// Adaptive-moment gradient descent over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(learning_rate: f64, n_params: usize) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Central finite differences of `f` at `params` with step `h`.
pub fn finite_difference_gradient<F: Fn(&[f64]) -> f64>(
    f: F,
    params: &[f64],
    h: f64,
) -> Vec<f64> {
    let mut work = params.to_vec();
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let original = work[i];
        work[i] = original + h;
        let above = f(&work);
        work[i] = original - h;
        let below = f(&work);
        work[i] = original;
        grad[i] = (above - below) / (2.0 * h);
    }
    grad
}

/// Worst-case relative disagreement between two gradients; the denominator
/// is floored so that near-zero coordinates compare absolutely.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-4))
        .fold(0.0, f64::max)
}

/// Training trajectory plus the post-training gradient self-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sample loss, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    /// Max relative error between analytic and central-finite-difference
    /// gradients on one batch after training.
    pub grad_check_max_rel_error: f64,
}
