//! Variational autoencoder baseline; novelty is the reconstruction error at the posterior mean.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_dims, check_steps, row_mean_abs, NoveltyEstimator, StateBuffer};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{Activation, Graph, Linear, Mlp};
use crate::optim::Adam;
use crate::rng::{derive_seed, stream, Rng};
use crate::tensor::{ParamSet, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct VaeConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub lr: f64,
    pub batch: usize,
    pub kl_weight: f64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            hidden: 64,
            lr: 1e-3,
            batch: 64,
            kl_weight: 1.0,
        }
    }
}

/// `KL(N(mu, exp(logvar)) || N(0, I))` for one diagonal Gaussian.
pub fn kl_to_unit_normal(mu: &[f64], logvar: &[f64]) -> f64 {
    -0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
        .sum::<f64>()
}

pub struct Vae {
    pub obs_dim: usize,
    pub latent_dim: usize,
    pub trunk: Mlp,
    pub mean_head: Linear,
    pub logvar_head: Linear,
    pub decoder: Mlp,
    pub enc_params: ParamSet,
    pub dec_params: ParamSet,
    kl_weight: f64,
    batch: usize,
    enc_opt: Adam,
    dec_opt: Adam,
    rng: Rng,
}

impl Vae {
    pub fn new(obs_dim: usize, binary_obs: bool, cfg: &VaeConfig, seed: u64) -> Result<Self> {
        if cfg.latent_dim == 0 || cfg.hidden == 0 || cfg.batch == 0 || !(cfg.lr > 0.0) || !(cfg.kl_weight >= 0.0) {
            return Err(Error::Config("vae widths, batch and lr must be positive".into()));
        }
        let mut init = stream(seed, "vae.init");
        let mut enc_params = ParamSet::new();
        let mut dec_params = ParamSet::new();
        let h = cfg.hidden;
        let trunk = Mlp::new(&mut enc_params, "vae_enc", &[obs_dim, h, h], Activation::Tanh, Activation::Tanh, &mut init)?;
        let mean_head = Linear::new(&mut enc_params, "vae_enc.mu", h, cfg.latent_dim, 1.0, &mut init)?;
        let logvar_head = Linear::new(&mut enc_params, "vae_enc.logvar", h, cfg.latent_dim, 0.1, &mut init)?;
        let out = if binary_obs { Activation::Sigmoid } else { Activation::Identity };
        let decoder = Mlp::new(&mut dec_params, "vae_dec", &[cfg.latent_dim, h, h, obs_dim], Activation::Tanh, out, &mut init)?;
        Ok(Self {
            obs_dim,
            latent_dim: cfg.latent_dim,
            trunk,
            mean_head,
            logvar_head,
            decoder,
            enc_params,
            dec_params,
            kl_weight: cfg.kl_weight,
            batch: cfg.batch,
            enc_opt: Adam::new(cfg.lr),
            dec_opt: Adam::new(cfg.lr),
            rng: Rng::seed_from_u64(derive_seed(seed, "vae.sample")),
        })
    }

    fn encode(&self, tape: &mut Tape, x: Var) -> Result<(Var, Var)> {
        let h = self.trunk.forward(tape, &self.enc_params, x)?;
        let mu = self.mean_head.forward(tape, &self.enc_params, h)?;
        let lv = self.logvar_head.forward(tape, &self.enc_params, h)?;
        Ok((mu, lv))
    }

    /// One negative-ELBO step: squared reconstruction error summed over dimensions plus the
    /// weighted KL term, both averaged over the batch.
    pub fn train_step(&mut self, buffer: &StateBuffer) -> Result<f64> {
        let n = self.batch;
        let x = Tensor::matrix(n, self.obs_dim, buffer.sample_flat(n, &mut self.rng)?)?;
        let eps: Vec<f64> = (0..n * self.latent_dim).map(|_| StandardNormal.sample(&mut self.rng)).collect();
        let mut tape = Tape::new();
        let xv = tape.input(&x)?;
        let (mu, lv) = self.encode(&mut tape, xv)?;
        let half_lv = tape.scale(lv, 0.5)?;
        let std = tape.exp(half_lv)?;
        let e = tape.constant(n, self.latent_dim, eps)?;
        let noise = tape.mul(std, e)?;
        let z = tape.add(mu, noise)?;
        let rec = self.decoder.forward(&mut tape, &self.dec_params, z)?;
        let diff = tape.sub(rec, xv)?;
        let mse = tape.mean_square(diff)?;
        let recon = tape.scale(mse, self.obs_dim as f64)?;
        // KL = -0.5 * sum(1 + lv - mu^2 - exp(lv)) per row, averaged over rows.
        let mu2 = tape.square(mu)?;
        let elv = tape.exp(lv)?;
        let a = tape.sub(lv, mu2)?;
        let b = tape.sub(a, elv)?;
        let c = tape.add_scalar(b, 1.0)?;
        let rows = tape.sum_cols(c)?;
        let m = tape.mean(rows)?;
        let kl = tape.scale(m, -0.5 * self.kl_weight)?;
        let loss = tape.add(recon, kl)?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::NonFinite("vae elbo".into()));
        }
        let grads = tape.backward(loss)?;
        self.enc_params.zero_grads();
        self.dec_params.zero_grads();
        self.enc_params.accumulate(&grads);
        self.dec_params.accumulate(&grads);
        self.enc_opt.step(&mut self.enc_params)?;
        self.dec_opt.step(&mut self.dec_params)?;
        Ok(value)
    }

    /// Posterior means and log-variances for a batch.
    pub fn posterior(&self, states: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let x = tape.input(&Tensor::from_rows(states)?)?;
        let (mu, lv) = self.encode(&mut tape, x)?;
        Ok((tape.value(mu).data().to_vec(), tape.value(lv).data().to_vec()))
    }
}

impl NoveltyEstimator for Vae {
    fn fit(&mut self, buffer: &StateBuffer, steps: usize) -> Result<Vec<f64>> {
        check_steps(steps, buffer)?;
        (0..steps).map(|_| self.train_step(buffer)).collect()
    }

    fn score_batch(&self, states: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_dims(states, self.obs_dim)?;
        let mut tape = Tape::new();
        let x = tape.input(&Tensor::from_rows(states)?)?;
        let (mu, _) = self.encode(&mut tape, x)?;
        let rec = self.decoder.forward(&mut tape, &self.dec_params, mu)?;
        Ok(row_mean_abs(tape.value(x).data(), tape.value(rec).data(), self.obs_dim))
    }

    fn export(&self) -> ParamSet {
        let mut all = self.enc_params.clone();
        for (name, t) in self.dec_params.iter() {
            all.insert(name, t.clone()).expect("prefixes are disjoint");
        }
        all
    }

    fn import(&mut self, params: &ParamSet) -> Result<()> {
        for set in [&mut self.enc_params, &mut self.dec_params] {
            let names: Vec<String> = set.iter().map(|(n, _)| n.to_string()).collect();
            for name in names {
                set.get_mut(&name)?.data_mut().copy_from_slice(params.get(&name)?.data());
            }
        }
        Ok(())
    }

    fn name(&self) -> &'static str {
        "vae"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_of_unit_normal_is_zero() {
        assert_eq!(kl_to_unit_normal(&[0.0; 5], &[0.0; 5]), 0.0);
        assert!(kl_to_unit_normal(&[1.0], &[0.0]) > 0.0);
    }

    #[test]
    fn identity_autoencoder_scores_zero() {
        let cfg = VaeConfig {
            latent_dim: 3,
            hidden: 3,
            ..VaeConfig::default()
        };
        let mut v = Vae::new(3, false, &cfg, 4).unwrap();
        let mut init = stream(0, "t");
        let mut ep = ParamSet::new();
        let mut dp = ParamSet::new();
        v.trunk = Mlp::new(&mut ep, "vae_enc", &[3, 3], Activation::Identity, Activation::Identity, &mut init).unwrap();
        v.mean_head = Linear::new(&mut ep, "vae_enc.mu", 3, 3, 1.0, &mut init).unwrap();
        v.logvar_head = Linear::new(&mut ep, "vae_enc.logvar", 3, 3, 1.0, &mut init).unwrap();
        v.decoder = Mlp::new(&mut dp, "vae_dec", &[3, 3], Activation::Identity, Activation::Identity, &mut init).unwrap();
        let eye = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        for name in ["vae_enc.l0.w", "vae_enc.mu.w"] {
            ep.get_mut(name).unwrap().data_mut().copy_from_slice(&eye);
        }
        dp.get_mut("vae_dec.l0.w").unwrap().data_mut().copy_from_slice(&eye);
        v.enc_params = ep;
        v.dec_params = dp;
        let s = v.score_batch(&[vec![0.2, -0.4, 1.0], vec![3.0, 0.0, 0.5]]).unwrap();
        assert!(s.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fit_reduces_loss() {
        let states: Vec<Vec<f64>> = (0..32).map(|i| (0..8).map(|j| f64::from((i + j) % 2)).collect()).collect();
        let buf = StateBuffer::from_states(states).unwrap();
        let mut v = Vae::new(8, true, &VaeConfig::default(), 5).unwrap();
        let losses = v.fit(&buf, 300).unwrap();
        let head: f64 = losses[..20].iter().sum();
        let tail: f64 = losses[losses.len() - 20..].iter().sum();
        assert!(tail < head);
        assert!(v.fit(&buf, 0).is_err());
    }
}
