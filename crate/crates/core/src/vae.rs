//! Variational autoencoder over windows, used to score how well a window
//! matches the learned normal behaviour.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, ModelFile, Network, NetworkSpec, ParameterStore, Parameterized};
use crate::timeseries::WindowDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaeConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            latent_dim: 4,
            hidden: 32,
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub encoder: Network,
    pub decoder: Network,
    latent_dim: usize,
    input_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeOutput {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
    /// Noise used for the sample; all zeros when scoring.
    pub eps: Vec<f64>,
    pub z: Vec<f64>,
    pub x_hat: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboLoss {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Closed-form `KL(N(μ, diag σ²) ‖ N(0, I))`.
pub fn kl_divergence(mu: &[f64], log_var: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(log_var)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

fn squared_error(x: &[f64], x_hat: &[f64]) -> f64 {
    x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum()
}

impl VaeModel {
    /// Encoder `n → hidden → 2·latent`, decoder `latent → hidden → n`, tanh
    /// hidden units and linear outputs.
    pub fn new(input_dim: usize, latent_dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        let encoder = NetworkSpec::mlp(&[input_dim, hidden, 2 * latent_dim], Activation::Tanh, Activation::Identity)?;
        let decoder = NetworkSpec::mlp(&[latent_dim, hidden, input_dim], Activation::Tanh, Activation::Identity)?;
        VaeModel::from_networks(Network::init(encoder, seed)?, Network::init(decoder, seed.wrapping_add(1))?)
    }

    pub fn from_networks(encoder: Network, decoder: Network) -> Result<Self> {
        let enc_out = encoder.spec.output_width();
        if enc_out % 2 != 0 {
            return Err(Error::Spec("encoder must emit μ and log σ² halves".into()));
        }
        let latent_dim = enc_out / 2;
        if decoder.spec.input_width() != latent_dim || decoder.spec.output_width() != encoder.spec.input_width() {
            return Err(Error::Spec("decoder widths do not mirror the encoder".into()));
        }
        if encoder.spec.is_recurrent() || decoder.spec.is_recurrent() {
            return Err(Error::Spec("vae networks are dense-only".into()));
        }
        let input_dim = encoder.spec.input_width();
        Ok(VaeModel {
            encoder,
            decoder,
            latent_dim,
            input_dim,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "window has {} values, model expects {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(())
    }

    fn draw_noise(&self, noise: Option<&[f64]>, rng: &mut impl Rng) -> Result<Vec<f64>> {
        match noise {
            Some(eps) if eps.len() == self.latent_dim => Ok(eps.to_vec()),
            Some(eps) => Err(Error::Shape(format!(
                "noise has {} entries, latent dimension is {}",
                eps.len(),
                self.latent_dim
            ))),
            None => Ok((0..self.latent_dim).map(|_| rng.sample(StandardNormal)).collect()),
        }
    }

    /// Encodes, samples `z = μ + exp(½ log σ²) ⊙ ε` and decodes. A supplied
    /// `noise` vector replaces the random draw.
    pub fn encode_decode(&self, x: &[f64], noise: Option<&[f64]>, rng: &mut impl Rng) -> Result<VaeOutput> {
        self.check_input(x)?;
        let eps = self.draw_noise(noise, rng)?;
        self.run(x, eps)
    }

    fn run(&self, x: &[f64], eps: Vec<f64>) -> Result<VaeOutput> {
        let stats = self.encoder.predict(x)?;
        let (mu, log_var) = stats.split_at(self.latent_dim);
        let z: Vec<f64> = mu
            .iter()
            .zip(log_var)
            .zip(&eps)
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect();
        let x_hat = self.decoder.predict(&z)?;
        let out = VaeOutput {
            mu: mu.to_vec(),
            log_var: log_var.to_vec(),
            eps,
            z,
            x_hat,
        };
        if out.mu.iter().chain(&out.log_var).chain(&out.x_hat).any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                name: "vae".into(),
                message: "non-finite encoder or decoder output".into(),
            });
        }
        Ok(out)
    }

    /// Negative ELBO: summed squared reconstruction error plus the
    /// closed-form KL term.
    pub fn elbo_loss(&self, x: &[f64], output: &VaeOutput) -> Result<ElboLoss> {
        self.check_input(x)?;
        let recon = squared_error(x, &output.x_hat);
        let kl = kl_divergence(&output.mu, &output.log_var);
        let total = recon + kl;
        if !total.is_finite() {
            return Err(Error::Numeric {
                name: "elbo".into(),
                message: format!("loss is {total}"),
            });
        }
        Ok(ElboLoss { total, recon, kl })
    }

    /// Negative ELBO for a fixed noise vector.
    pub fn loss_with_noise(&self, x: &[f64], eps: &[f64]) -> Result<ElboLoss> {
        self.check_input(x)?;
        if eps.len() != self.latent_dim {
            return Err(Error::Shape("noise does not match latent dimension".into()));
        }
        let out = self.run(x, eps.to_vec())?;
        self.elbo_loss(x, &out)
    }

    /// Adds `scale · ∂(−ELBO)/∂θ` for one window and fixed noise into both
    /// networks' gradient slots.
    pub fn accumulate_gradients(&mut self, x: &[f64], eps: &[f64], scale: f64) -> Result<ElboLoss> {
        self.check_input(x)?;
        if eps.len() != self.latent_dim {
            return Err(Error::Shape("noise does not match latent dimension".into()));
        }
        let l = self.latent_dim;
        let (stats, enc_tape) = self.encoder.forward(x)?;
        let (mu, log_var) = stats.split_at(l);
        let sigma: Vec<f64> = log_var.iter().map(|lv| (0.5 * lv).exp()).collect();
        let z: Vec<f64> = (0..l).map(|j| mu[j] + sigma[j] * eps[j]).collect();
        let (x_hat, dec_tape) = self.decoder.forward(&z)?;

        let recon = squared_error(x, &x_hat);
        let kl = kl_divergence(mu, log_var);
        let total = recon + kl;
        if !total.is_finite() {
            return Err(Error::Numeric {
                name: "elbo".into(),
                message: format!("loss is {total}"),
            });
        }

        let d_xhat: Vec<f64> = x_hat.iter().zip(x).map(|(xh, xi)| scale * 2.0 * (xh - xi)).collect();
        let dz = self.decoder.backward(&dec_tape, &d_xhat)?;
        let mut d_stats = vec![0.0; 2 * l];
        for j in 0..l {
            d_stats[j] = dz[j] + scale * mu[j];
            d_stats[l + j] = dz[j] * eps[j] * 0.5 * sigma[j] + scale * 0.5 * (log_var[j].exp() - 1.0);
        }
        self.encoder.backward(&enc_tape, &d_stats)?;
        Ok(ElboLoss { total, recon, kl })
    }

    /// Reconstruction score: mean squared error per dimension with
    /// `z = μ`, so the result is a pure function of `x`.
    pub fn reconstruction_error(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let stats = self.encoder.predict(x)?;
        let x_hat = self.decoder.predict(&stats[..self.latent_dim])?;
        Ok(squared_error(x, &x_hat) / self.input_dim as f64)
    }

    pub fn to_model_file(&self) -> ModelFile {
        ModelFile::new("vae")
            .with_network("encoder", &self.encoder)
            .with_network("decoder", &self.decoder)
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self> {
        if file.kind != "vae" {
            return Err(Error::Version(format!("expected a vae container, found `{}`", file.kind)));
        }
        VaeModel::from_networks(file.network("encoder")?, file.network("decoder")?)
    }
}

impl Parameterized for VaeModel {
    fn stores(&self) -> Vec<&ParameterStore> {
        vec![&self.encoder.store, &self.decoder.store]
    }

    fn stores_mut(&mut self) -> Vec<&mut ParameterStore> {
        vec![&mut self.encoder.store, &mut self.decoder.store]
    }
}

/// Minibatch descent on the negative ELBO; returns per-epoch means.
///
/// A batch size larger than the dataset is clamped to one full batch.
pub fn train_vae(
    model: &mut VaeModel,
    data: &WindowDataset,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<Vec<EpochStats>> {
    if data.is_empty() {
        return Err(Error::Data("no windows to train the vae on".into()));
    }
    if data.n_steps() != model.input_dim {
        return Err(Error::Shape(format!(
            "dataset windows have {} steps, model expects {}",
            data.n_steps(),
            model.input_dim
        )));
    }
    if batch_size == 0 {
        return Err(Error::Argument("batch_size must be positive".into()));
    }
    let batch_size = batch_size.min(data.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut enc_opt = Adam::default();
    let mut dec_opt = Adam::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut sums = ElboLoss {
            total: 0.0,
            recon: 0.0,
            kl: 0.0,
        };
        for batch in order.chunks(batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let eps: Vec<f64> = (0..model.latent_dim).map(|_| rng.sample(StandardNormal)).collect();
                let loss = model.accumulate_gradients(data.window(i), &eps, scale)?;
                sums.total += loss.total;
                sums.recon += loss.recon;
                sums.kl += loss.kl;
            }
            enc_opt.step(&mut model.encoder.store, learning_rate)?;
            dec_opt.step(&mut model.decoder.store, learning_rate)?;
        }
        let n = data.len() as f64;
        log.push(EpochStats {
            epoch,
            total: sums.total / n,
            recon: sums.recon / n,
            kl: sums.kl / n,
        });
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{compare_with_finite_differences, Tensor};

    fn tiny(seed: u64) -> VaeModel {
        VaeModel::new(8, 2, 6, seed).unwrap()
    }

    #[test]
    fn zero_noise_gives_mean() {
        let m = tiny(1);
        let x = [0.1; 8];
        let out = m.encode_decode(&x, Some(&[0.0, 0.0]), &mut rand::rng()).unwrap();
        assert_eq!(out.z, out.mu);
    }

    #[test]
    fn unit_variance_adds_noise() {
        let mut m = tiny(2);
        // Zero the log-variance half of the encoder's output layer.
        let tensors = m.encoder.store.tensors_mut();
        let (w, b) = tensors.split_at_mut(3);
        for r in 2..4 {
            w[2].value[r * 6..(r + 1) * 6].iter_mut().for_each(|v| *v = 0.0);
            b[0].value[r] = 0.0;
        }
        let out = m
            .encode_decode(&[0.3; 8], Some(&[0.5, -1.0]), &mut rand::rng())
            .unwrap();
        assert_eq!(out.log_var, vec![0.0, 0.0]);
        assert_eq!(out.z, vec![out.mu[0] + 0.5, out.mu[1] - 1.0]);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let m = tiny(3);
        let a = m.encode_decode(&[0.2; 8], None, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = m.encode_decode(&[0.2; 8], None, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kl_values() {
        assert_eq!(kl_divergence(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((kl_divergence(&[1.0, 0.0], &[0.0, 0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perfect_reconstruction_scores_zero() {
        let m = tiny(5);
        let x = [0.4; 8];
        let out = m.encode_decode(&x, Some(&[0.0, 0.0]), &mut rand::rng()).unwrap();
        let loss = m.elbo_loss(&out.x_hat.clone(), &out).unwrap();
        assert_eq!(loss.recon, 0.0);
    }

    fn linear_net(input: usize, output: usize, weight: f64, bias: f64) -> Network {
        let spec = NetworkSpec::new(vec![crate::nn::LayerSpec::dense(input, output, Activation::Identity)]).unwrap();
        let mut w = Tensor::zeros("layer0.weight", vec![output, input]);
        w.value.iter_mut().for_each(|v| *v = weight);
        let mut b = Tensor::zeros("layer0.bias", vec![output]);
        b.value.iter_mut().for_each(|v| *v = bias);
        Network::from_parts(spec, ParameterStore::from_tensors(vec![w, b], 0).unwrap()).unwrap()
    }

    #[test]
    fn reconstruction_error_matches_hand_value() {
        // Decoder emits (1, 1) regardless of z; x = (0, 0) → ((1)² + (1)²)/2.
        let model = VaeModel::from_networks(linear_net(2, 2, 0.0, 0.0), linear_net(1, 2, 0.0, 1.0)).unwrap();
        assert_eq!(model.reconstruction_error(&[0.0, 0.0]).unwrap(), 1.0);
        assert!(matches!(model.reconstruction_error(&[0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn reconstruction_error_is_repeatable() {
        let m = tiny(6);
        let x: Vec<f64> = (0..8).map(|i| i as f64 * 0.1).collect();
        let a = m.reconstruction_error(&x).unwrap();
        assert!(a >= 0.0);
        assert_eq!(a.to_bits(), m.reconstruction_error(&x).unwrap().to_bits());
    }

    #[test]
    fn elbo_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let mut m = tiny(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.5..1.5)).collect();
            let eps: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
            m.accumulate_gradients(&x, &eps, 1.0).unwrap();
            let report = compare_with_finite_differences(&mut m, |m| m.loss_with_noise(&x, &eps).unwrap().total, 1e-4);
            assert!(report.pass, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn zero_epochs_changes_nothing() {
        let mut m = tiny(7);
        let before = m.clone();
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.1; 8]).collect();
        let data = WindowDataset::from_rows(&rows, None).unwrap();
        let log = train_vae(&mut m, &data, 0, 4, 1e-3, 1).unwrap();
        assert!(log.is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn empty_dataset_rejected() {
        let mut m = tiny(7);
        let rows: Vec<Vec<f64>> = (0..4).map(|_| vec![0.0; 8]).collect();
        let data = WindowDataset::from_rows(&rows, None).unwrap().select(&[]);
        assert!(matches!(train_vae(&mut m, &data, 1, 4, 1e-3, 1), Err(Error::Data(_))));
    }

    #[test]
    fn oversized_batch_is_one_full_batch() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![(i as f64).sin(); 8]).collect();
        let data = WindowDataset::from_rows(&rows, None).unwrap();
        let mut a = tiny(8);
        let mut b = tiny(8);
        train_vae(&mut a, &data, 2, 500, 1e-2, 3).unwrap();
        train_vae(&mut b, &data, 2, 5, 1e-2, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_reduces_reconstruction() {
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|s| (0..16).map(|k| ((s + k) as f64 * 2.0 * std::f64::consts::PI / 25.0).sin()).collect())
            .collect();
        let data = WindowDataset::from_rows(&rows, None).unwrap();
        let mut m = VaeModel::new(16, 4, 32, 9).unwrap();
        let log = train_vae(&mut m, &data, 30, 32, 3e-3, 1).unwrap();
        assert!(log.last().unwrap().recon < log[0].recon, "{log:?}");
    }
}
