//! Random network distillation.

use rand::SeedableRng;

use super::{check_dims, check_steps, NoveltyEstimator, StateBuffer};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::nn::{Activation, Graph, Mlp};
use crate::optim::Adam;
use crate::rng::{derive_seed, stream, Rng};
use crate::tensor::{ParamSet, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct RndConfig {
    pub hidden: usize,
    pub feature_width: usize,
    pub lr: f64,
    pub batch: usize,
}

impl Default for RndConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            feature_width: 64,
            lr: 1e-3,
            batch: 64,
        }
    }
}

/// A frozen random target network and a trained predictor of its features.
pub struct Rnd {
    pub obs_dim: usize,
    pub target: Mlp,
    pub predictor: Mlp,
    pub target_params: ParamSet,
    pub predictor_params: ParamSet,
    batch: usize,
    opt: Adam,
    rng: Rng,
}

impl Rnd {
    pub fn new(obs_dim: usize, cfg: &RndConfig, seed: u64) -> Result<Self> {
        if cfg.hidden == 0 || cfg.feature_width == 0 || cfg.batch == 0 || !(cfg.lr > 0.0) {
            return Err(Error::Config("rnd widths, batch and lr must be positive".into()));
        }
        let mut init = stream(seed, "rnd.init");
        let mut target_params = ParamSet::new();
        let mut predictor_params = ParamSet::new();
        let sizes = [obs_dim, cfg.hidden, cfg.hidden, cfg.feature_width];
        let target = Mlp::new(&mut target_params, "rnd_target", &sizes, Activation::LeakyRelu(0.2), Activation::Identity, &mut init)?;
        let predictor = Mlp::new(&mut predictor_params, "rnd_pred", &sizes, Activation::LeakyRelu(0.2), Activation::Identity, &mut init)?;
        Ok(Self {
            obs_dim,
            target,
            predictor,
            target_params,
            predictor_params,
            batch: cfg.batch,
            opt: Adam::new(cfg.lr),
            rng: Rng::seed_from_u64(derive_seed(seed, "rnd.sample")),
        })
    }

    /// Copies the target weights into the predictor (layer shapes match by construction).
    pub fn copy_target_into_predictor(&mut self) {
        let src: Vec<(String, Vec<f64>)> = self
            .target_params
            .iter()
            .map(|(n, t)| (n.replacen("rnd_target", "rnd_pred", 1), t.data().to_vec()))
            .collect();
        for (name, data) in src {
            self.predictor_params
                .get_mut(&name)
                .expect("predictor mirrors target")
                .data_mut()
                .copy_from_slice(&data);
        }
    }
}

impl NoveltyEstimator for Rnd {
    fn fit(&mut self, buffer: &StateBuffer, steps: usize) -> Result<Vec<f64>> {
        check_steps(steps, buffer)?;
        let mut losses = Vec::with_capacity(steps);
        for _ in 0..steps {
            let x = Tensor::matrix(self.batch, self.obs_dim, buffer.sample_flat(self.batch, &mut self.rng)?)?;
            let mut tape = Tape::new();
            let xv = tape.input(&x)?;
            let t = self.target.forward(&mut tape, &self.target_params, xv)?;
            let t = tape.detach(t)?;
            let p = self.predictor.forward(&mut tape, &self.predictor_params, xv)?;
            let d = tape.sub(p, t)?;
            let loss = tape.mean_square(d)?;
            losses.push(tape.scalar(loss));
            let grads = tape.backward(loss)?;
            self.predictor_params.zero_grads();
            self.predictor_params.accumulate(&grads);
            self.opt.step(&mut self.predictor_params)?;
        }
        Ok(losses)
    }

    fn score_batch(&self, states: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_dims(states, self.obs_dim)?;
        let mut tape = Tape::new();
        let x = tape.input(&Tensor::from_rows(states)?)?;
        let t = self.target.forward(&mut tape, &self.target_params, x)?;
        let p = self.predictor.forward(&mut tape, &self.predictor_params, x)?;
        let w = tape.dims(t).1;
        let td = tape.value(t).data();
        let pd = tape.value(p).data();
        Ok(td
            .chunks(w)
            .zip(pd.chunks(w))
            .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>() / w as f64)
            .collect())
    }

    fn export(&self) -> ParamSet {
        let mut all = self.target_params.clone();
        for (name, t) in self.predictor_params.iter() {
            all.insert(name, t.clone()).expect("prefixes are disjoint");
        }
        all
    }

    fn import(&mut self, params: &ParamSet) -> Result<()> {
        let mut target = self.target_params.clone();
        let mut pred = self.predictor_params.clone();
        for (name, t) in params.iter() {
            if name.starts_with("rnd_target") {
                target.get_mut(name)?.data_mut().copy_from_slice(t.data());
            } else if name.starts_with("rnd_pred") {
                pred.get_mut(name)?.data_mut().copy_from_slice(t.data());
            }
        }
        self.target_params = target;
        self.predictor_params = pred;
        Ok(())
    }

    fn name(&self) -> &'static str {
        "rnd"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<Vec<f64>> {
        (0..16).map(|i| (0..6).map(|j| ((i * 7 + j * 3) % 5) as f64 / 4.0).collect()).collect()
    }

    #[test]
    fn copied_predictor_scores_zero() {
        let mut r = Rnd::new(6, &RndConfig::default(), 1).unwrap();
        assert!(r.score_batch(&corpus()).unwrap().iter().all(|&s| s > 0.0));
        r.copy_target_into_predictor();
        assert!(r.score_batch(&corpus()).unwrap().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn fit_keeps_target_and_lowers_loss() {
        let mut r = Rnd::new(6, &RndConfig::default(), 2).unwrap();
        let buf = StateBuffer::from_states(corpus()).unwrap();
        let target = r.target_params.checksum();
        let before: f64 = r.score_batch(&corpus()).unwrap().iter().sum();
        let losses = r.fit(&buf, 500).unwrap();
        assert_eq!(r.target_params.checksum(), target);
        assert!(losses.last().unwrap() < losses.first().unwrap());
        let after: f64 = r.score_batch(&corpus()).unwrap().iter().sum();
        assert!(after < before);
        assert!(r.fit(&buf, 0).is_err());
        assert!(r.fit(&StateBuffer::new(1).unwrap(), 1).is_err());
    }
}
