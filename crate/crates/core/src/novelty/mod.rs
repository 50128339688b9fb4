//! Novelty estimators: fit on visited states, score any state.

mod bigan;
mod buffer;
mod rnd;
mod vae;

pub use bigan::{Bigan, BiganConfig, NoveltyParts};
pub use buffer::StateBuffer;
pub use rnd::{Rnd, RndConfig};
pub use vae::{kl_to_unit_normal, Vae, VaeConfig};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::ParamSet;

/// Common contract for BiGAN, RND and VAE scorers.
pub trait NoveltyEstimator: Send {
    /// Runs `steps` optimizer steps on minibatches drawn from `buffer`; one loss per step.
    fn fit(&mut self, buffer: &StateBuffer, steps: usize) -> Result<Vec<f64>>;

    /// Novelty of each state. Never mutates the estimator.
    fn score_batch(&self, states: &[Vec<f64>]) -> Result<Vec<f64>>;

    fn score(&self, state: &[f64]) -> Result<f64> {
        Ok(self.score_batch(&[state.to_vec()])?[0])
    }

    /// All parameters, merged under their network prefixes.
    fn export(&self) -> ParamSet;

    /// Loads parameters previously produced by [`NoveltyEstimator::export`].
    fn import(&mut self, params: &ParamSet) -> Result<()>;

    fn name(&self) -> &'static str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoveltyMethod {
    Bigan,
    Rnd,
    Vae,
    /// BiGAN with the reconstruction term only (alpha forced to 1).
    LgOnly,
    /// BiGAN with the feature-matching term only (alpha forced to 0).
    LdOnly,
    None,
}

impl NoveltyMethod {
    pub const ALL: [NoveltyMethod; 6] = [
        NoveltyMethod::Bigan,
        NoveltyMethod::Rnd,
        NoveltyMethod::Vae,
        NoveltyMethod::LgOnly,
        NoveltyMethod::LdOnly,
        NoveltyMethod::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NoveltyMethod::Bigan => "bigan",
            NoveltyMethod::Rnd => "rnd",
            NoveltyMethod::Vae => "vae",
            NoveltyMethod::LgOnly => "lg_only",
            NoveltyMethod::LdOnly => "ld_only",
            NoveltyMethod::None => "none",
        }
    }

    /// Alpha actually used for BiGAN-backed methods.
    pub fn effective_alpha(self, alpha: f64) -> f64 {
        match self {
            NoveltyMethod::LgOnly => 1.0,
            NoveltyMethod::LdOnly => 0.0,
            _ => alpha,
        }
    }
}

impl fmt::Display for NoveltyMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoveltyMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoveltyMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown novelty method `{s}`")))
    }
}

/// Everything needed to build an estimator for one observation space.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub method: NoveltyMethod,
    pub bigan: BiganConfig,
    pub rnd: RndConfig,
    pub vae: VaeConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            method: NoveltyMethod::Bigan,
            bigan: BiganConfig::default(),
            rnd: RndConfig::default(),
            vae: VaeConfig::default(),
        }
    }
}

/// Builds the configured estimator, or `None` for `method = none`.
pub fn build_estimator(
    cfg: &EstimatorConfig,
    obs_dim: usize,
    binary_obs: bool,
    seed: u64,
) -> Result<Option<Box<dyn NoveltyEstimator>>> {
    Ok(match cfg.method {
        NoveltyMethod::None => None,
        NoveltyMethod::Bigan | NoveltyMethod::LgOnly | NoveltyMethod::LdOnly => {
            let mut b = cfg.bigan.clone();
            b.alpha = cfg.method.effective_alpha(b.alpha);
            Some(Box::new(Bigan::new(obs_dim, binary_obs, &b, seed)?))
        }
        NoveltyMethod::Rnd => Some(Box::new(Rnd::new(obs_dim, &cfg.rnd, seed)?)),
        NoveltyMethod::Vae => Some(Box::new(Vae::new(obs_dim, binary_obs, &cfg.vae, seed)?)),
    })
}

pub(crate) fn check_steps(steps: usize, buffer: &StateBuffer) -> Result<()> {
    if steps == 0 {
        return Err(Error::Precondition("fit needs at least one step".into()));
    }
    if buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    Ok(())
}

pub(crate) fn check_dims(states: &[Vec<f64>], dim: usize) -> Result<()> {
    if states.is_empty() {
        return Err(Error::Precondition("no states to score".into()));
    }
    if let Some(s) = states.iter().find(|s| s.len() != dim) {
        return Err(Error::Shape {
            op: "score",
            expected: vec![dim],
            got: vec![s.len()],
        });
    }
    Ok(())
}

/// Mean absolute difference of two equal-shape row-major matrices, per row.
pub(crate) fn row_mean_abs(a: &[f64], b: &[f64], cols: usize) -> Vec<f64> {
    a.chunks(cols)
        .zip(b.chunks(cols))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>() / cols as f64)
        .collect()
}
