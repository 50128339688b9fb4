//! BiGAN novelty scorer.
//!
//! Encoder `E: state -> latent`, generator `G: latent -> state`, and a discriminator over
//! `(state, latent)` pairs whose penultimate hidden layer doubles as the feature map `f_D`.
//! A state's novelty is
//!
//! ```text
//! B(s) = alpha * mean|s - G(E(s))| + (1 - alpha) * mean|f_D(s, E(s)) - f_D(G(E(s)), E(s))|
//! ```

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_dims, check_steps, row_mean_abs, NoveltyEstimator, StateBuffer};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{Activation, Graph, Mlp};
use crate::optim::Adam;
use crate::rng::{derive_seed, stream, Rng};
use crate::tensor::{ParamSet, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct BiganConfig {
    pub alpha: f64,
    pub latent_dim: usize,
    pub hidden: usize,
    /// Width of the discriminator feature layer `f_D`.
    pub feature_width: usize,
    pub lr: f64,
    pub batch: usize,
}

impl Default for BiganConfig {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            latent_dim: 8,
            hidden: 64,
            feature_width: 64,
            lr: 2e-4,
            batch: 64,
        }
    }
}

impl BiganConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("bigan.alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.latent_dim == 0 || self.hidden == 0 || self.feature_width == 0 || self.batch == 0 {
            return Err(Error::Config("bigan widths and batch must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("bigan.lr must be positive".into()));
        }
        Ok(())
    }
}

/// Per-state reconstruction (`L_G`) and feature-matching (`L_D`) errors.
#[derive(Debug, Clone, PartialEq)]
pub struct NoveltyParts {
    pub recon: Vec<f64>,
    pub feature: Vec<f64>,
}

impl NoveltyParts {
    /// `alpha * L_G + (1 - alpha) * L_D` for every state.
    pub fn mix(&self, alpha: f64) -> Vec<f64> {
        self.recon
            .iter()
            .zip(&self.feature)
            .map(|(g, d)| alpha * g + (1.0 - alpha) * d)
            .collect()
    }
}

pub struct Bigan {
    pub alpha: f64,
    pub obs_dim: usize,
    pub latent_dim: usize,
    pub batch: usize,
    pub encoder: Mlp,
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub enc_params: ParamSet,
    pub gen_params: ParamSet,
    pub disc_params: ParamSet,
    enc_opt: Adam,
    gen_opt: Adam,
    disc_opt: Adam,
    rng: Rng,
}

const LEAK: f64 = 0.2;

impl Bigan {
    pub fn new(obs_dim: usize, binary_obs: bool, cfg: &BiganConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut init = stream(seed, "bigan.init");
        let h = cfg.hidden;
        let dz = cfg.latent_dim;
        let mut enc_params = ParamSet::new();
        let mut gen_params = ParamSet::new();
        let mut disc_params = ParamSet::new();
        let encoder = Mlp::new(&mut enc_params, "enc", &[obs_dim, h, h, dz], Activation::Tanh, Activation::Identity, &mut init)?;
        let out = if binary_obs { Activation::Sigmoid } else { Activation::Identity };
        let generator = Mlp::new(&mut gen_params, "gen", &[dz, h, h, obs_dim], Activation::Tanh, out, &mut init)?;
        let discriminator = Mlp::new(
            &mut disc_params,
            "disc",
            &[obs_dim + dz, h, cfg.feature_width, 1],
            Activation::LeakyRelu(LEAK),
            Activation::Identity,
            &mut init,
        )?;
        let adam = || Adam::new(cfg.lr).with_betas(0.5, 0.999);
        Ok(Self {
            alpha: cfg.alpha,
            obs_dim,
            latent_dim: dz,
            batch: cfg.batch,
            encoder,
            generator,
            discriminator,
            enc_params,
            gen_params,
            disc_params,
            enc_opt: adam(),
            gen_opt: adam(),
            disc_opt: adam(),
            rng: Rng::seed_from_u64(derive_seed(seed, "bigan.sample")),
        })
    }

    fn latent(&mut self, n: usize) -> Vec<f64> {
        (0..n * self.latent_dim)
            .map(|_| StandardNormal.sample(&mut self.rng))
            .collect()
    }

    fn disc_logit(&self, tape: &mut Tape, disc: &ParamSet, s: Var, z: Var) -> Result<Var> {
        let pair = tape.concat(s, z)?;
        self.discriminator.forward(tape, disc, pair)
    }

    /// Discriminator loss `softplus(-D(s, E(s))) + softplus(D(G(z), z))`, batch means, with
    /// the encoder and generator outputs detached.
    pub fn d_loss_graph(&self, tape: &mut Tape, enc: &ParamSet, gen: &ParamSet, disc: &ParamSet, x: Var, z: Var) -> Result<Var> {
        let ez = self.encoder.forward(tape, enc, x)?;
        let ez = tape.detach(ez)?;
        let gz = self.generator.forward(tape, gen, z)?;
        let gz = tape.detach(gz)?;
        let d_real = self.disc_logit(tape, disc, x, ez)?;
        let d_fake = self.disc_logit(tape, disc, gz, z)?;
        let neg_real = tape.neg(d_real)?;
        let l_real = tape.softplus(neg_real)?;
        let l_fake = tape.softplus(d_fake)?;
        let m_real = tape.mean(l_real)?;
        let m_fake = tape.mean(l_fake)?;
        tape.add(m_real, m_fake)
    }

    /// Non-saturating encoder/generator loss: the discriminator loss with the pair labels
    /// swapped.
    pub fn ge_loss_graph(&self, tape: &mut Tape, enc: &ParamSet, gen: &ParamSet, disc: &ParamSet, x: Var, z: Var) -> Result<Var> {
        let ez = self.encoder.forward(tape, enc, x)?;
        let gz = self.generator.forward(tape, gen, z)?;
        let d_real = self.disc_logit(tape, disc, x, ez)?;
        let d_fake = self.disc_logit(tape, disc, gz, z)?;
        let l_real = tape.softplus(d_real)?;
        let neg_fake = tape.neg(d_fake)?;
        let l_fake = tape.softplus(neg_fake)?;
        let m_real = tape.mean(l_real)?;
        let m_fake = tape.mean(l_fake)?;
        tape.add(m_real, m_fake)
    }

    /// One discriminator ascent step followed by one encoder/generator step.
    /// Returns `(d_loss, ge_loss)` measured before the respective updates.
    pub fn train_step(&mut self, buffer: &StateBuffer) -> Result<(f64, f64)> {
        if buffer.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let n = self.batch;
        let real = buffer.sample_flat(n, &mut self.rng)?;
        let z = self.latent(n);
        let real_t = Tensor::matrix(n, self.obs_dim, real)?;
        let z_t = Tensor::matrix(n, self.latent_dim, z)?;

        let d_loss = {
            let mut tape = Tape::new();
            let x = tape.input(&real_t)?;
            let zc = tape.input(&z_t)?;
            let loss = self.d_loss_graph(&mut tape, &self.enc_params, &self.gen_params, &self.disc_params, x, zc)?;
            let value = tape.scalar(loss);
            let grads = tape.backward(loss)?;
            self.disc_params.zero_grads();
            self.disc_params.accumulate(&grads);
            self.disc_opt.step(&mut self.disc_params)?;
            value
        };

        let ge_loss = {
            let mut tape = Tape::new();
            let x = tape.input(&real_t)?;
            let zc = tape.input(&z_t)?;
            let loss = self.ge_loss_graph(&mut tape, &self.enc_params, &self.gen_params, &self.disc_params, x, zc)?;
            let value = tape.scalar(loss);
            let grads = tape.backward(loss)?;
            self.enc_params.zero_grads();
            self.gen_params.zero_grads();
            self.enc_params.accumulate(&grads);
            self.gen_params.accumulate(&grads);
            self.enc_opt.step(&mut self.enc_params)?;
            self.gen_opt.step(&mut self.gen_params)?;
            value
        };
        if !d_loss.is_finite() || !ge_loss.is_finite() {
            return Err(Error::NonFinite("bigan loss".into()));
        }
        Ok((d_loss, ge_loss))
    }

    /// Reconstruction and feature-matching errors for each state.
    pub fn parts(&self, states: &[Vec<f64>]) -> Result<NoveltyParts> {
        check_dims(states, self.obs_dim)?;
        let mut tape = Tape::new();
        let x = tape.input(&Tensor::from_rows(states)?)?;
        let ez = self.encoder.forward(&mut tape, &self.enc_params, x)?;
        let rec = self.generator.forward(&mut tape, &self.gen_params, ez)?;
        let pair_real = tape.concat(x, ez)?;
        let pair_rec = tape.concat(rec, ez)?;
        let (_, h_real) = self.discriminator.forward_with_hidden(&mut tape, &self.disc_params, pair_real)?;
        let (_, h_rec) = self.discriminator.forward_with_hidden(&mut tape, &self.disc_params, pair_rec)?;
        let f_real = *h_real.last().expect("discriminator has hidden layers");
        let f_rec = *h_rec.last().expect("discriminator has hidden layers");
        let width = tape.dims(f_real).1;
        let recon = row_mean_abs(tape.value(x).data(), tape.value(rec).data(), self.obs_dim);
        let feature = row_mean_abs(tape.value(f_real).data(), tape.value(f_rec).data(), width);
        if recon.iter().chain(&feature).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("novelty score".into()));
        }
        Ok(NoveltyParts { recon, feature })
    }

    /// The `f_D` features of `(s, z)` pairs.
    pub fn features(&self, states: &[Vec<f64>], latents: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let x = tape.input(&Tensor::from_rows(states)?)?;
        let z = tape.input(&Tensor::from_rows(latents)?)?;
        let pair = tape.concat(x, z)?;
        let (_, h) = self.discriminator.forward_with_hidden(&mut tape, &self.disc_params, pair)?;
        let f = *h.last().expect("discriminator has hidden layers");
        let (r, c) = tape.dims(f);
        let d = tape.value(f).data();
        Ok((0..r).map(|i| d[i * c..(i + 1) * c].to_vec()).collect())
    }
}

impl NoveltyEstimator for Bigan {
    fn fit(&mut self, buffer: &StateBuffer, steps: usize) -> Result<Vec<f64>> {
        check_steps(steps, buffer)?;
        (0..steps)
            .map(|_| self.train_step(buffer).map(|(d, ge)| d + ge))
            .collect()
    }

    fn score_batch(&self, states: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.parts(states)?.mix(self.alpha))
    }

    fn export(&self) -> ParamSet {
        let mut all = ParamSet::new();
        for set in [&self.enc_params, &self.gen_params, &self.disc_params] {
            for (name, t) in set.iter() {
                all.insert(name, t.clone()).expect("prefixes are disjoint");
            }
        }
        all
    }

    fn import(&mut self, params: &ParamSet) -> Result<()> {
        for set in [&mut self.enc_params, &mut self.gen_params, &mut self.disc_params] {
            let names: Vec<String> = set.iter().map(|(n, _)| n.to_string()).collect();
            for name in names {
                let src = params.get(&name)?;
                let dst = set.get_mut(&name)?;
                if src.shape() != dst.shape() {
                    return Err(Error::Shape {
                        op: "bigan.import",
                        expected: dst.shape().to_vec(),
                        got: src.shape().to_vec(),
                    });
                }
                dst.data_mut().copy_from_slice(src.data());
            }
        }
        Ok(())
    }

    fn name(&self) -> &'static str {
        "bigan"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn states() -> Vec<Vec<f64>> {
        vec![vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 1.0, 1.0, 0.0], vec![0.5, 0.5, 0.0, 0.0]]
    }

    #[test]
    fn alpha_endpoints_and_linearity() {
        let b = Bigan::new(4, false, &BiganConfig::default(), 3).unwrap();
        let p = b.parts(&states()).unwrap();
        assert_eq!(p.mix(1.0), p.recon);
        assert_eq!(p.mix(0.0), p.feature);
        for a in [0.25, 0.5, 0.9] {
            for (i, v) in p.mix(a).iter().enumerate() {
                let lin = a * p.recon[i] + (1.0 - a) * p.feature[i];
                assert!((v - lin).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn scoring_leaves_parameters_untouched() {
        let b = Bigan::new(4, false, &BiganConfig::default(), 3).unwrap();
        let before = b.export().checksum();
        b.score_batch(&states()).unwrap();
        b.score(&states()[0]).unwrap();
        assert_eq!(b.export().checksum(), before);
    }

    #[test]
    fn identity_reconstruction_scores_zero() {
        // Linear encoder/generator whose composition is the identity.
        let cfg = BiganConfig {
            latent_dim: 4,
            hidden: 4,
            ..BiganConfig::default()
        };
        let mut b = Bigan::new(4, false, &cfg, 1).unwrap();
        let mut init = stream(1, "t");
        let mut ep = ParamSet::new();
        let mut gp = ParamSet::new();
        b.encoder = Mlp::new(&mut ep, "enc", &[4, 4], Activation::Identity, Activation::Identity, &mut init).unwrap();
        b.generator = Mlp::new(&mut gp, "gen", &[4, 4], Activation::Identity, Activation::Identity, &mut init).unwrap();
        let eye: Vec<f64> = (0..16).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect();
        ep.get_mut("enc.l0.w").unwrap().data_mut().copy_from_slice(&eye);
        gp.get_mut("gen.l0.w").unwrap().data_mut().copy_from_slice(&eye);
        b.enc_params = ep;
        b.gen_params = gp;
        for alpha in [0.0, 0.3, 0.9, 1.0] {
            b.alpha = alpha;
            assert!(b.score_batch(&states()).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn fresh_discriminator_loss_near_chance() {
        let mut b = Bigan::new(4, false, &BiganConfig::default(), 9).unwrap();
        let buf = StateBuffer::from_states(states()).unwrap();
        let (d, ge) = b.train_step(&buf).unwrap();
        let chance = 2.0 * std::f64::consts::LN_2;
        assert!((d - chance).abs() < 0.5 * chance, "d_loss {d}");
        assert!(ge.is_finite());
    }

    #[test]
    fn fit_preconditions() {
        let mut b = Bigan::new(4, false, &BiganConfig::default(), 9).unwrap();
        let buf = StateBuffer::from_states(states()).unwrap();
        assert!(b.fit(&buf, 0).is_err());
        assert!(matches!(b.fit(&StateBuffer::new(4).unwrap(), 1), Err(Error::EmptyBuffer)));
        assert_eq!(b.fit(&buf, 3).unwrap().len(), 3);
    }

    #[test]
    fn wrong_dim_state_rejected() {
        let b = Bigan::new(4, false, &BiganConfig::default(), 9).unwrap();
        assert!(b.score(&[1.0, 2.0]).is_err());
    }
}
