//! Variational autoencoder over dense layers: encoder trunk feeding mean
//! and log-variance heads, reparameterised sampling z = mu + sigma * eps,
//! and a decoder mapping the latent back to feature space. Trained on the
//! negated ELBO with mean-squared-error reconstruction and the analytic
//! diagonal-Gaussian KL term.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::neural::{
    backward_layer, finite_difference_gradient, flatten_layer, forward_cached,
    max_relative_error, unflatten_layer, Activation, Adam, DenseLayer, LayerCache, TrainReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeModel {
    /// Relu layers mapping input to the encoder hidden representation.
    pub encoder_trunk: Vec<DenseLayer>,
    /// Linear head producing the latent mean.
    pub mu_head: DenseLayer,
    /// Linear head producing the latent log-variance.
    pub logvar_head: DenseLayer,
    /// Hidden relu layer(s) followed by a linear output back to input space.
    pub decoder: Vec<DenseLayer>,
    pub latent_dim: usize,
    pub input_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub reconstruction: f64,
    pub kl: f64,
}

/// Analytic KL divergence of N(mu, diag(exp(logvar))) from N(0, I):
/// 1/2 sum(mu^2 + sigma^2 - 1 - log sigma^2). Zero exactly at mu = 0,
/// logvar = 0.
pub fn gaussian_kl(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter()
        .zip(logvar)
        .map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum()
}

impl VaeModel {
    pub fn new(input_dim: usize, hidden_dim: usize, latent_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        VaeModel {
            encoder_trunk: vec![DenseLayer::random(
                input_dim,
                hidden_dim,
                Activation::Relu,
                rng,
            )],
            mu_head: DenseLayer::random(hidden_dim, latent_dim, Activation::Linear, rng),
            logvar_head: DenseLayer::random(hidden_dim, latent_dim, Activation::Linear, rng),
            decoder: vec![
                DenseLayer::random(latent_dim, hidden_dim, Activation::Relu, rng),
                DenseLayer::random(hidden_dim, input_dim, Activation::Linear, rng),
            ],
            latent_dim,
            input_dim,
        }
    }

    /// Latent mean and log-variance for one input row.
    pub fn encode(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut h = x.to_vec();
        for layer in &self.encoder_trunk {
            h = layer.forward(&h);
        }
        (self.mu_head.forward(&h), self.logvar_head.forward(&h))
    }

    /// Reconstruction of a latent vector.
    pub fn decode(&self, z: &[f64]) -> Vec<f64> {
        let mut h = z.to_vec();
        for layer in &self.decoder {
            h = layer.forward(&h);
        }
        h
    }

    /// Batch-averaged loss with one reparameterised sample per row drawn
    /// from `rng`. Returns the loss and its reconstruction/KL split.
    pub fn elbo_loss(
        &self,
        batch: &[Vec<f64>],
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, LossComponents)> {
        let eps = draw_noise(batch.len(), self.latent_dim, rng);
        self.elbo_loss_with_noise(batch, &eps)
    }

    /// Deterministic loss under fixed reparameterisation noise. With eps
    /// all zeros the loss is sampling-free.
    pub fn elbo_loss_with_noise(
        &self,
        batch: &[Vec<f64>],
        eps: &[Vec<f64>],
    ) -> Result<(f64, LossComponents)> {
        let (loss, components, _) = self.loss_grad_impl(batch, eps, false)?;
        Ok((loss, components))
    }

    /// Loss plus flat parameter gradient, for training and gradient checks.
    pub fn loss_and_grad(
        &self,
        batch: &[Vec<f64>],
        eps: &[Vec<f64>],
    ) -> Result<(f64, LossComponents, Vec<f64>)> {
        let (loss, components, grad) = self.loss_grad_impl(batch, eps, true)?;
        Ok((loss, components, grad.expect("requested gradient")))
    }

    fn loss_grad_impl(
        &self,
        batch: &[Vec<f64>],
        eps: &[Vec<f64>],
        want_grad: bool,
    ) -> Result<(f64, LossComponents, Option<Vec<f64>>)> {
        if batch.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        if batch.len() != eps.len() {
            return Err(Error::DimensionMismatch {
                expected: batch.len(),
                actual: eps.len(),
            });
        }
        let b = batch.len() as f64;
        let d = self.input_dim as f64;
        let mut grad = if want_grad {
            Some(vec![0.0; self.param_count()])
        } else {
            None
        };
        let mut recon_total = 0.0;
        let mut kl_total = 0.0;

        for (x, eps_row) in batch.iter().zip(eps) {
            if x.len() != self.input_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.input_dim,
                    actual: x.len(),
                });
            }
            // forward
            let mut trunk_caches: Vec<LayerCache> = Vec::with_capacity(self.encoder_trunk.len());
            let mut h = x.clone();
            for layer in &self.encoder_trunk {
                let (out, cache) = forward_cached(layer, &h);
                trunk_caches.push(cache);
                h = out;
            }
            let (mu, mu_cache) = forward_cached(&self.mu_head, &h);
            let (logvar, lv_cache) = forward_cached(&self.logvar_head, &h);
            let sigma: Vec<f64> = logvar.iter().map(|&lv| (0.5 * lv).exp()).collect();
            let z: Vec<f64> = mu
                .iter()
                .zip(&sigma)
                .zip(eps_row)
                .map(|((&m, &s), &e)| m + s * e)
                .collect();
            let mut dec_caches: Vec<LayerCache> = Vec::with_capacity(self.decoder.len());
            let mut xhat = z.clone();
            for layer in &self.decoder {
                let (out, cache) = forward_cached(layer, &xhat);
                dec_caches.push(cache);
                xhat = out;
            }

            let recon: f64 = xhat
                .iter()
                .zip(x)
                .map(|(&r, &v)| (r - v) * (r - v))
                .sum::<f64>()
                / d;
            let kl = gaussian_kl(&mu, &logvar);
            if !recon.is_finite() || !kl.is_finite() {
                return Err(Error::Degenerate(
                    "non-finite VAE activations; lower the learning rate".into(),
                ));
            }
            recon_total += recon;
            kl_total += kl;

            let Some(grad) = grad.as_mut() else { continue };

            // backward, scaled by 1/batch
            let mut d_xhat: Vec<f64> = xhat
                .iter()
                .zip(x)
                .map(|(&r, &v)| 2.0 * (r - v) / (d * b))
                .collect();
            let mut offset = self.param_count();
            // decoder layers, last to first
            for (layer, cache) in self.decoder.iter().zip(&dec_caches).rev() {
                offset -= layer.param_count();
                d_xhat = backward_layer(layer, cache, &d_xhat, &mut grad[offset..]);
            }
            let d_z = d_xhat;
            // reparameterisation: z = mu + exp(lv/2) * eps
            let d_mu: Vec<f64> = d_z
                .iter()
                .zip(&mu)
                .map(|(&dz, &m)| dz + m / b)
                .collect();
            let d_lv: Vec<f64> = d_z
                .iter()
                .zip(&sigma)
                .zip(eps_row)
                .zip(&logvar)
                .map(|(((&dz, &s), &e), &lv)| dz * 0.5 * s * e + 0.5 * (lv.exp() - 1.0) / b)
                .collect();
            // heads share the trunk output
            offset -= self.logvar_head.param_count();
            let d_h_lv = backward_layer(&self.logvar_head, &lv_cache, &d_lv, &mut grad[offset..]);
            offset -= self.mu_head.param_count();
            let d_h_mu = backward_layer(&self.mu_head, &mu_cache, &d_mu, &mut grad[offset..]);
            let mut d_h: Vec<f64> = d_h_lv.iter().zip(&d_h_mu).map(|(&a, &c)| a + c).collect();
            for (layer, cache) in self.encoder_trunk.iter().zip(&trunk_caches).rev() {
                offset -= layer.param_count();
                d_h = backward_layer(layer, cache, &d_h, &mut grad[offset..]);
            }
            debug_assert_eq!(offset, 0);
        }

        let components = LossComponents {
            reconstruction: recon_total / b,
            kl: kl_total / b,
        };
        Ok((
            components.reconstruction + components.kl,
            components,
            grad,
        ))
    }

    fn layers(&self) -> Vec<&DenseLayer> {
        let mut layers: Vec<&DenseLayer> = self.encoder_trunk.iter().collect();
        layers.push(&self.mu_head);
        layers.push(&self.logvar_head);
        layers.extend(self.decoder.iter());
        layers
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for layer in self.layers() {
            flatten_layer(layer, &mut flat);
        }
        flat
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let mut k = 0;
        for layer in &mut self.encoder_trunk {
            k += unflatten_layer(layer, &flat[k..]);
        }
        k += unflatten_layer(&mut self.mu_head, &flat[k..]);
        k += unflatten_layer(&mut self.logvar_head, &flat[k..]);
        for layer in &mut self.decoder {
            k += unflatten_layer(layer, &flat[k..]);
        }
        debug_assert_eq!(k, flat.len());
    }
}

fn draw_noise(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

/// Mean loss over all rows with zero reparameterisation noise.
fn deterministic_loss(model: &VaeModel, data: &[Vec<f64>], epoch: usize) -> Result<f64> {
    let mut total = 0.0;
    for chunk in data.chunks(256) {
        let eps = vec![vec![0.0; model.latent_dim]; chunk.len()];
        let (loss, _) = model
            .elbo_loss_with_noise(chunk, &eps)
            .map_err(|e| match e {
                Error::Degenerate(msg) => Error::Divergence {
                    epoch,
                    batch: 0,
                    message: msg,
                },
                other => other,
            })?;
        total += loss * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VaeTrainOptions {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for VaeTrainOptions {
    fn default() -> Self {
        VaeTrainOptions {
            latent_dim: 10,
            hidden_dim: 32,
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

const DIVERGENCE_LIMIT: f64 = 1e6;

/// Trains a VAE on the given rows of an (already transformed) feature
/// matrix by minibatch adaptive-moment descent on the negated ELBO.
/// Shuffling and reparameterisation noise are seed-deterministic.
pub fn train_vae(
    x: &FeatureMatrix,
    rows: &[usize],
    opts: &VaeTrainOptions,
) -> Result<(VaeModel, TrainReport)> {
    if opts.epochs == 0 {
        return Err(Error::Argument("epochs must be at least 1".into()));
    }
    if opts.batch_size == 0 || opts.latent_dim == 0 || opts.hidden_dim == 0 {
        return Err(Error::Argument(
            "batch_size, latent_dim, and hidden_dim must be at least 1".into(),
        ));
    }
    if rows.is_empty() {
        return Err(Error::Argument("no training rows".into()));
    }
    let data: Vec<Vec<f64>> = rows.iter().map(|&i| x.row(i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut model = VaeModel::new(x.n_features(), opts.hidden_dim, opts.latent_dim, &mut rng);
    let mut adam = Adam::new(opts.learning_rate, model.param_count());
    let mut params = model.params();

    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..opts.epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for (batch_idx, chunk) in order.chunks(opts.batch_size).enumerate() {
            let batch: Vec<Vec<f64>> = chunk.iter().map(|&i| data[i].clone()).collect();
            let eps = draw_noise(batch.len(), opts.latent_dim, &mut rng);
            let (loss, _, grad) = model.loss_and_grad(&batch, &eps).map_err(|e| match e {
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
                adam.step(&mut params, &grad);
                model.set_params(&params);
            }
        }
        // trajectory entry: sampling-free loss (eps = 0) over the train
        // rows, so frozen parameters give an exactly constant trajectory
        epoch_losses.push(deterministic_loss(&model, &data, epoch)?);
    }

    // self-check: analytic vs central finite differences on one batch
    let check_rows = data.len().min(opts.batch_size).min(8);
    let batch: Vec<Vec<f64>> = data[..check_rows].to_vec();
    let mut check_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    check_rng.set_stream(u64::MAX);
    let eps = draw_noise(check_rows, opts.latent_dim, &mut check_rng);
    let (_, _, analytic) = model.loss_and_grad(&batch, &eps)?;
    let reference = model.clone();
    let numeric = finite_difference_gradient(
        |p| {
            let mut probe = reference.clone();
            probe.set_params(p);
            probe
                .elbo_loss_with_noise(&batch, &eps)
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

/// Returns [X | mu(X)]: the original features with the latent means
/// appended as `latent_0..latent_k` columns. Deterministic; no sampling.
pub fn encode_and_augment(model: &VaeModel, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    if x.n_features() != model.input_dim {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim,
            actual: x.n_features(),
        });
    }
    let mut latent_cols = vec![Vec::with_capacity(x.n_rows()); model.latent_dim];
    for i in 0..x.n_rows() {
        let (mu, _) = model.encode(&x.row(i));
        for (col, value) in latent_cols.iter_mut().zip(mu) {
            col.push(value);
        }
    }
    let names = (0..model.latent_dim).map(|k| format!("latent_{k}")).collect();
    x.append_columns(names, latent_cols)
}
