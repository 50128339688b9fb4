//! Run configuration in a flat `dotted.key = value` text format.
//!
//! Blank lines and `#` comments are ignored. Every key has a default and unknown keys are
//! rejected.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::env::{Environment, GridMaze, PointGoal, SparseChain};
use crate::error::{Error, Result};
use crate::novelty::{BiganConfig, EstimatorConfig, NoveltyMethod, RndConfig, VaeConfig};
use crate::ppo::PpoConfig;
use crate::reward::NormalizeVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvName {
    SparseChain,
    GridMaze,
    PointGoal,
}

impl EnvName {
    pub const ALL: [EnvName; 3] = [EnvName::SparseChain, EnvName::GridMaze, EnvName::PointGoal];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SparseChain => "sparse_chain",
            Self::GridMaze => "grid_maze",
            Self::PointGoal => "point_goal",
        }
    }
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown env.name `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub name: EnvName,
    pub chain_length: usize,
    pub maze_seed: u64,
    pub goal_radius: f64,
    pub step_size: f64,
    pub dense: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            name: EnvName::SparseChain,
            chain_length: 10,
            maze_seed: 0,
            goal_radius: 0.1,
            step_size: 0.1,
            dense: false,
        }
    }
}

/// Latent width: `None` picks 8 for small observations and 32 for bitplane-sized ones.
pub fn resolve_latent(latent: Option<usize>, obs_dim: usize) -> usize {
    latent.unwrap_or(if obs_dim > 64 { 32 } else { 8 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoveltyConfig {
    pub method: NoveltyMethod,
    pub bigan: BiganConfig,
    pub bigan_latent: Option<usize>,
    pub rnd: RndConfig,
    pub vae: VaeConfig,
    pub vae_latent: Option<usize>,
    pub buffer_capacity: usize,
    pub steps_per_epoch: usize,
}

impl Default for NoveltyConfig {
    fn default() -> Self {
        Self {
            method: NoveltyMethod::Bigan,
            bigan: BiganConfig::default(),
            bigan_latent: None,
            rnd: RndConfig::default(),
            vae: VaeConfig::default(),
            vae_latent: None,
            buffer_capacity: 50_000,
            steps_per_epoch: 50,
        }
    }
}

impl NoveltyConfig {
    /// Estimator settings for a concrete observation width.
    pub fn estimator(&self, obs_dim: usize) -> EstimatorConfig {
        let mut bigan = self.bigan.clone();
        bigan.latent_dim = resolve_latent(self.bigan_latent, obs_dim);
        let mut vae = self.vae.clone();
        vae.latent_dim = resolve_latent(self.vae_latent, obs_dim);
        EstimatorConfig {
            method: self.method,
            bigan,
            rnd: self.rnd.clone(),
            vae,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryConfig {
    pub enabled: bool,
    pub k: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self { enabled: false, k: 64 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub episodes: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Extra episodes per epoch from initial-state starts, scored on extrinsic reward only.
    pub eval_episodes: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            episodes: 8,
            horizon: 20,
            seed: 0,
            eval_episodes: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub wall_clock: bool,
    /// Save a checkpoint every this many epochs; 0 saves only the final one.
    pub checkpoint_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs/default"),
            wall_clock: false,
            checkpoint_every: 0,
        }
    }
}

/// Settings of the offline novelty experiments and grid searches.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub per_part: usize,
    pub flip: f64,
    pub fit_steps: usize,
    pub seeds: usize,
    pub bins: usize,
    pub fractions: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    pub suite: Vec<EnvName>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            per_part: 512,
            flip: 0.05,
            fit_steps: 1000,
            seeds: 6,
            bins: 20,
            fractions: vec![0.0, 0.25, 0.5, 1.0],
            alpha_grid: vec![0.5, 0.7, 0.9, 1.0],
            beta_grid: vec![0.2, 0.3, 0.5],
            suite: EnvName::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub novelty: NoveltyConfig,
    pub memory: MemoryConfig,
    pub training: TrainingConfig,
    pub normalize: NormalizeVariant,
    pub output: OutputConfig,
    pub experiment: ExperimentConfig,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = `{value}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_latent(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn latent_str(l: Option<usize>) -> String {
    l.map_or_else(|| "auto".into(), |n| n.to_string())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Assigns one key. Values are checked for syntax here and for range in [`Self::validate`].
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let k = key;
        match key {
            "env.name" => self.env.name = parse(k, v)?,
            "env.chain_length" => self.env.chain_length = parse(k, v)?,
            "env.maze_seed" => self.env.maze_seed = parse(k, v)?,
            "env.goal_radius" => self.env.goal_radius = parse(k, v)?,
            "env.step_size" => self.env.step_size = parse(k, v)?,
            "env.dense" => self.env.dense = parse(k, v)?,
            "ppo.clip" => self.ppo.clip = parse(k, v)?,
            "ppo.gamma_e" => self.ppo.gamma_e = parse(k, v)?,
            "ppo.gamma_i" => self.ppo.gamma_i = parse(k, v)?,
            "ppo.lambda" => self.ppo.lambda = parse(k, v)?,
            "ppo.beta" => self.ppo.beta = parse(k, v)?,
            "ppo.epochs" => self.ppo.epochs = parse(k, v)?,
            "ppo.minibatch" => self.ppo.minibatch = parse(k, v)?,
            "ppo.entropy" => self.ppo.entropy = parse(k, v)?,
            "ppo.lr" => self.ppo.lr = parse(k, v)?,
            "ppo.value_coef" => self.ppo.value_coef = parse(k, v)?,
            "ppo.max_grad_norm" => self.ppo.max_grad_norm = parse(k, v)?,
            "ppo.hidden" => self.ppo.hidden = parse(k, v)?,
            "novelty.method" => self.novelty.method = parse(k, v)?,
            "bigan.alpha" => self.novelty.bigan.alpha = parse(k, v)?,
            "bigan.latent_dim" => self.novelty.bigan_latent = parse_latent(k, v)?,
            "bigan.hidden" => self.novelty.bigan.hidden = parse(k, v)?,
            "bigan.feature_width" => self.novelty.bigan.feature_width = parse(k, v)?,
            "bigan.lr" => self.novelty.bigan.lr = parse(k, v)?,
            "bigan.batch" => self.novelty.bigan.batch = parse(k, v)?,
            "bigan.buffer_capacity" => self.novelty.buffer_capacity = parse(k, v)?,
            "bigan.steps_per_epoch" => self.novelty.steps_per_epoch = parse(k, v)?,
            "rnd.hidden" => self.novelty.rnd.hidden = parse(k, v)?,
            "rnd.feature_width" => self.novelty.rnd.feature_width = parse(k, v)?,
            "rnd.lr" => self.novelty.rnd.lr = parse(k, v)?,
            "rnd.batch" => self.novelty.rnd.batch = parse(k, v)?,
            "vae.latent_dim" => self.novelty.vae_latent = parse_latent(k, v)?,
            "vae.hidden" => self.novelty.vae.hidden = parse(k, v)?,
            "vae.lr" => self.novelty.vae.lr = parse(k, v)?,
            "vae.batch" => self.novelty.vae.batch = parse(k, v)?,
            "vae.kl_weight" => self.novelty.vae.kl_weight = parse(k, v)?,
            "memory.enabled" => self.memory.enabled = parse(k, v)?,
            "memory.k" => self.memory.k = parse(k, v)?,
            "training.epochs" => self.training.epochs = parse(k, v)?,
            "training.episodes" => self.training.episodes = parse(k, v)?,
            "training.horizon" => self.training.horizon = parse(k, v)?,
            "training.seed" => self.training.seed = parse(k, v)?,
            "training.eval_episodes" => self.training.eval_episodes = parse(k, v)?,
            "normalize.variant" => self.normalize = parse(k, v)?,
            "output.dir" => self.output.dir = PathBuf::from(v),
            "output.wall_clock" => self.output.wall_clock = parse(k, v)?,
            "output.checkpoint_every" => self.output.checkpoint_every = parse(k, v)?,
            "experiment.per_part" => self.experiment.per_part = parse(k, v)?,
            "experiment.flip" => self.experiment.flip = parse(k, v)?,
            "experiment.fit_steps" => self.experiment.fit_steps = parse(k, v)?,
            "experiment.seeds" => self.experiment.seeds = parse(k, v)?,
            "experiment.bins" => self.experiment.bins = parse(k, v)?,
            "experiment.fractions" => self.experiment.fractions = parse_list(k, v)?,
            "grid.alpha" => self.experiment.alpha_grid = parse_list(k, v)?,
            "grid.beta" => self.experiment.beta_grid = parse_list(k, v)?,
            "grid.suite" => self.experiment.suite = parse_list(k, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let n = &self.novelty;
        vec![
            ("env.name", self.env.name.as_str().into()),
            ("env.chain_length", self.env.chain_length.to_string()),
            ("env.maze_seed", self.env.maze_seed.to_string()),
            ("env.goal_radius", self.env.goal_radius.to_string()),
            ("env.step_size", self.env.step_size.to_string()),
            ("env.dense", self.env.dense.to_string()),
            ("ppo.clip", self.ppo.clip.to_string()),
            ("ppo.gamma_e", self.ppo.gamma_e.to_string()),
            ("ppo.gamma_i", self.ppo.gamma_i.to_string()),
            ("ppo.lambda", self.ppo.lambda.to_string()),
            ("ppo.beta", self.ppo.beta.to_string()),
            ("ppo.epochs", self.ppo.epochs.to_string()),
            ("ppo.minibatch", self.ppo.minibatch.to_string()),
            ("ppo.entropy", self.ppo.entropy.to_string()),
            ("ppo.lr", self.ppo.lr.to_string()),
            ("ppo.value_coef", self.ppo.value_coef.to_string()),
            ("ppo.max_grad_norm", self.ppo.max_grad_norm.to_string()),
            ("ppo.hidden", self.ppo.hidden.to_string()),
            ("novelty.method", n.method.as_str().into()),
            ("bigan.alpha", n.bigan.alpha.to_string()),
            ("bigan.latent_dim", latent_str(n.bigan_latent)),
            ("bigan.hidden", n.bigan.hidden.to_string()),
            ("bigan.feature_width", n.bigan.feature_width.to_string()),
            ("bigan.lr", n.bigan.lr.to_string()),
            ("bigan.batch", n.bigan.batch.to_string()),
            ("bigan.buffer_capacity", n.buffer_capacity.to_string()),
            ("bigan.steps_per_epoch", n.steps_per_epoch.to_string()),
            ("rnd.hidden", n.rnd.hidden.to_string()),
            ("rnd.feature_width", n.rnd.feature_width.to_string()),
            ("rnd.lr", n.rnd.lr.to_string()),
            ("rnd.batch", n.rnd.batch.to_string()),
            ("vae.latent_dim", latent_str(n.vae_latent)),
            ("vae.hidden", n.vae.hidden.to_string()),
            ("vae.lr", n.vae.lr.to_string()),
            ("vae.batch", n.vae.batch.to_string()),
            ("vae.kl_weight", n.vae.kl_weight.to_string()),
            ("memory.enabled", self.memory.enabled.to_string()),
            ("memory.k", self.memory.k.to_string()),
            ("training.epochs", self.training.epochs.to_string()),
            ("training.episodes", self.training.episodes.to_string()),
            ("training.horizon", self.training.horizon.to_string()),
            ("training.seed", self.training.seed.to_string()),
            ("training.eval_episodes", self.training.eval_episodes.to_string()),
            ("normalize.variant", self.normalize.as_str().into()),
            ("output.dir", self.output.dir.display().to_string()),
            ("output.wall_clock", self.output.wall_clock.to_string()),
            ("output.checkpoint_every", self.output.checkpoint_every.to_string()),
            ("experiment.per_part", self.experiment.per_part.to_string()),
            ("experiment.flip", self.experiment.flip.to_string()),
            ("experiment.fit_steps", self.experiment.fit_steps.to_string()),
            ("experiment.seeds", self.experiment.seeds.to_string()),
            ("experiment.bins", self.experiment.bins.to_string()),
            ("experiment.fractions", join(&self.experiment.fractions)),
            ("grid.alpha", join(&self.experiment.alpha_grid)),
            ("grid.beta", join(&self.experiment.beta_grid)),
            (
                "grid.suite",
                self.experiment.suite.iter().map(|e| e.as_str()).collect::<Vec<_>>().join(","),
            ),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let t = &self.training;
        if t.epochs == 0 || t.episodes == 0 || t.horizon == 0 {
            return bad("training.epochs, training.episodes and training.horizon must be at least 1");
        }
        if self.env.chain_length < 2 {
            return bad("env.chain_length must be at least 2");
        }
        if !(self.env.goal_radius > 0.0) || !(self.env.step_size > 0.0) {
            return bad("env.goal_radius and env.step_size must be positive");
        }
        self.ppo.validate()?;
        self.novelty.bigan.validate()?;
        if self.novelty.buffer_capacity == 0 || self.novelty.steps_per_epoch == 0 {
            return bad("bigan.buffer_capacity and bigan.steps_per_epoch must be positive");
        }
        if matches!(self.novelty.bigan_latent, Some(0)) || matches!(self.novelty.vae_latent, Some(0)) {
            return bad("latent_dim must be positive or `auto`");
        }
        let e = &self.experiment;
        if e.per_part < 2 || e.fit_steps == 0 || e.seeds == 0 || e.bins == 0 {
            return bad("experiment sizes must be positive");
        }
        if !(0.0..0.5).contains(&e.flip) {
            return bad("experiment.flip must lie in [0, 0.5)");
        }
        if e.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return bad("grid.alpha values must lie in [0, 1]");
        }
        if e.beta_grid.iter().any(|b| !(*b >= 0.0)) {
            return bad("grid.beta values must be non-negative");
        }
        if e.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return bad("experiment.fractions must lie in [0, 1]");
        }
        Ok(())
    }

    /// Builds the configured environment with this run's horizon.
    pub fn make_env(&self) -> Result<Box<dyn Environment>> {
        self.make_named_env(self.env.name)
    }

    pub fn make_named_env(&self, name: EnvName) -> Result<Box<dyn Environment>> {
        let h = self.training.horizon;
        Ok(match name {
            EnvName::SparseChain => Box::new(SparseChain::new(self.env.chain_length, h)?),
            EnvName::GridMaze => Box::new(GridMaze::new(self.env.maze_seed, h)?),
            EnvName::PointGoal => Box::new(PointGoal::new(self.env.goal_radius, self.env.step_size, self.env.dense, h)?),
        })
    }
}
