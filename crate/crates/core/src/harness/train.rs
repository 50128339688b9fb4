//! The exploration training loop.
//!
//! Each epoch collects episodes with the current policy, scores every next state with the
//! frozen novelty estimator, then runs in order: one statistics update, the conversion of raw
//! scores into intrinsic rewards, one PPO update on the augmented advantage and one estimator
//! fit on the visited-state buffer. With memory enabled, episodes after the first epoch start
//! from states remembered in the previous epoch.

use std::path::Path;
use std::time::Instant;

use rand::RngCore;

use super::config::RunConfig;
use super::metrics::{MetricsRecord, MetricsWriter};
use crate::checkpoint;
use crate::env::{Environment, StateSnapshot};
use crate::error::{Error, Result};
use crate::novelty::{build_estimator, NoveltyEstimator, StateBuffer};
use crate::ppo::{ppo_update, ActorCritic, Batch, Step, Trajectory, UpdateStats};
use crate::reward::{normalize_bonus, BonusNorm, EpisodicMemory, RunningStats};
use crate::rng::{stream, Rng};

/// Everything a finished run leaves behind.
pub struct TrainOutcome {
    pub records: Vec<MetricsRecord>,
    /// Policy loss of every PPO minibatch over the whole run.
    pub policy_losses: Vec<f64>,
    pub model: ActorCritic,
    pub estimator: Option<Box<dyn NoveltyEstimator>>,
}

pub struct Trainer {
    cfg: RunConfig,
    env: Box<dyn Environment>,
    eval_env: Box<dyn Environment>,
    model: ActorCritic,
    estimator: Option<Box<dyn NoveltyEstimator>>,
    buffer: StateBuffer,
    memory: EpisodicMemory,
    bonus_stats: RunningStats,
    extrinsic_stats: RunningStats,
    env_rng: Rng,
    action_rng: Rng,
    minibatch_rng: Rng,
    memory_rng: Rng,
    eval_rng: Rng,
    epoch: usize,
    episodes: usize,
    env_steps: usize,
    started: Instant,
}

struct Collected {
    trajectory: Trajectory,
    next_obs: Vec<Vec<f64>>,
    snapshots: Vec<Option<StateSnapshot>>,
    from_memory: bool,
}

impl Trainer {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let env = cfg.make_env()?;
        let spec = env.spec().clone();
        spec.validate()?;
        let root = cfg.training.seed;
        let model = ActorCritic::new(&spec, &cfg.ppo, &mut stream(root, "policy.init"))?;
        let est_cfg = cfg.novelty.estimator(spec.obs_dim);
        let estimator = build_estimator(&est_cfg, spec.obs_dim, spec.binary_obs, root)?;
        Ok(Self {
            eval_env: cfg.make_env()?,
            env,
            model,
            estimator,
            buffer: StateBuffer::new(cfg.novelty.buffer_capacity)?,
            memory: EpisodicMemory::new(cfg.memory.k, cfg.memory.enabled),
            bonus_stats: RunningStats::new(),
            extrinsic_stats: RunningStats::new(),
            env_rng: stream(root, "env"),
            action_rng: stream(root, "action"),
            minibatch_rng: stream(root, "minibatch"),
            memory_rng: stream(root, "memory"),
            eval_rng: stream(root, "eval"),
            epoch: 0,
            episodes: 0,
            env_steps: 0,
            started: Instant::now(),
            cfg: cfg.clone(),
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn model(&self) -> &ActorCritic {
        &self.model
    }

    pub fn estimator(&self) -> Option<&dyn NoveltyEstimator> {
        self.estimator.as_deref()
    }

    pub fn memory(&self) -> &EpisodicMemory {
        &self.memory
    }

    fn collect(&mut self, episode: usize) -> Result<Collected> {
        let reset_seed = self.env_rng.next_u64();
        let start = self.memory.sample_start(&mut self.memory_rng).cloned();
        let from_memory = start.is_some();
        let mut obs = match start {
            Some(snap) => {
                let o = self.env.restore(&snap)?;
                self.env.reset_clock();
                o
            }
            None => self.env.reset(reset_seed),
        };
        let mut tr = Trajectory {
            epoch: self.epoch,
            episode,
            ..Trajectory::default()
        };
        let mut next_obs = Vec::new();
        let mut snapshots = Vec::new();
        loop {
            let s = self.model.act(&obs, &mut self.action_rng)?;
            let t = self.env.step(&s.action)?;
            tr.steps.push(Step {
                obs: std::mem::take(&mut obs),
                action: s.raw,
                log_prob: s.log_prob,
                reward_e: t.reward,
                bonus: 0.0,
                reward_i: 0.0,
                value_e: s.value_e,
                value_i: s.value_i,
                done: t.done,
            });
            next_obs.push(t.observation.clone());
            snapshots.push(if t.done { None } else { t.snapshot });
            obs = t.observation;
            if t.done {
                tr.terminal = t.terminal;
                tr.success = t.success;
                break;
            }
        }
        let (ve, vi) = self.model.values(std::slice::from_ref(&obs))?;
        tr.bootstrap_e = ve[0];
        tr.bootstrap_i = vi[0];
        Ok(Collected {
            trajectory: tr,
            next_obs,
            snapshots,
            from_memory,
        })
    }

    fn evaluate(&mut self) -> Result<Option<f64>> {
        let n = self.cfg.training.eval_episodes;
        if n == 0 {
            return Ok(None);
        }
        let mut wins = 0;
        for _ in 0..n {
            let mut obs = self.eval_env.reset(self.eval_rng.next_u64());
            loop {
                let s = self.model.act(&obs, &mut self.eval_rng)?;
                let t = self.eval_env.step(&s.action)?;
                obs = t.observation;
                if t.done {
                    wins += usize::from(t.success);
                    break;
                }
            }
        }
        Ok(Some(wins as f64 / n as f64))
    }

    /// Runs one full epoch and returns its record and PPO statistics.
    pub fn run_epoch(&mut self) -> Result<(MetricsRecord, UpdateStats)> {
        let epoch = self.epoch;
        self.step_epoch().map_err(|e| Error::Epoch {
            epoch,
            source: Box::new(e),
        })
    }

    fn step_epoch(&mut self) -> Result<(MetricsRecord, UpdateStats)> {
        let mut rec = MetricsRecord {
            epoch: self.epoch,
            ..MetricsRecord::default()
        };
        let mut trajs = Vec::with_capacity(self.cfg.training.episodes);
        let mut bonuses = Vec::new();
        let mut rewards_e = Vec::new();
        let mut successes = 0;
        for episode in 0..self.cfg.training.episodes {
            let mut c = self.collect(episode)?;
            let scores = match &self.estimator {
                Some(est) => {
                    let b = est.score_batch(&c.next_obs)?;
                    rec.bonus_evals += b.len();
                    b
                }
                None => vec![0.0; c.next_obs.len()],
            };
            for (step, b) in c.trajectory.steps.iter_mut().zip(&scores) {
                step.bonus = *b;
                rewards_e.push(step.reward_e);
            }
            if self.memory.enabled() && self.estimator.is_some() {
                for (snap, b) in c.snapshots.iter().zip(&scores) {
                    if let Some(snap) = snap {
                        self.memory.offer(snap, *b);
                    }
                }
            }
            if self.estimator.is_some() {
                self.buffer.extend(c.next_obs);
            }
            bonuses.extend(scores);
            rec.memory_starts += usize::from(c.from_memory);
            successes += usize::from(c.trajectory.success);
            self.env_steps += c.trajectory.steps.len();
            trajs.push(c.trajectory);
        }
        self.episodes += trajs.len();

        self.bonus_stats.merge(&RunningStats::from_slice(&bonuses));
        self.extrinsic_stats.merge(&RunningStats::from_slice(&rewards_e));
        rec.stats_updates += 1;

        let norm = BonusNorm::from_stats(&self.bonus_stats, &self.extrinsic_stats);
        let mut intrinsic = RunningStats::new();
        if self.estimator.is_some() {
            for s in trajs.iter_mut().flat_map(|t| t.steps.iter_mut()) {
                s.reward_i = normalize_bonus(s.bonus, &norm, self.cfg.normalize);
                intrinsic.push(s.reward_i);
            }
        }

        let batch = Batch::from_trajectories(&trajs, &self.cfg.ppo)?;
        let stats = ppo_update(&mut self.model, &batch, &self.cfg.ppo, &mut self.minibatch_rng)?;
        rec.ppo_updates += 1;

        if let Some(est) = self.estimator.as_mut() {
            let losses = est.fit(&self.buffer, self.cfg.novelty.steps_per_epoch)?;
            rec.novelty_loss = Some(losses.iter().sum::<f64>() / losses.len() as f64);
            rec.novelty_updates += 1;
        }

        rec.memory_size = self.memory.write_buffer().len();
        self.memory.rollover();
        rec.eval_success_rate = self.evaluate()?;

        rec.episodes = self.episodes;
        rec.env_steps = self.env_steps;
        rec.mean_return = trajs.iter().map(Trajectory::extrinsic_return).sum::<f64>() / trajs.len() as f64;
        rec.success_rate = successes as f64 / trajs.len() as f64;
        rec.mean_bonus = RunningStats::from_slice(&bonuses).mean();
        rec.max_bonus = bonuses.iter().copied().fold(0.0, f64::max);
        rec.mu_b = norm.mu_b;
        rec.sigma_b = norm.sigma_b;
        rec.mu_e = norm.mu_e;
        rec.mean_intrinsic = intrinsic.mean();
        rec.policy_loss = stats.policy_loss;
        rec.value_loss_e = stats.value_loss_e;
        rec.value_loss_i = stats.value_loss_i;
        rec.entropy = stats.entropy;
        if self.cfg.output.wall_clock {
            rec.wall_clock = Some(self.started.elapsed().as_secs_f64());
        }
        self.epoch += 1;
        Ok((rec, stats))
    }

    pub fn save_checkpoints(&self, dir: &Path, suffix: &str) -> Result<()> {
        checkpoint::save(&self.model.params, dir.join(format!("policy{suffix}.advk")))?;
        if let Some(est) = &self.estimator {
            checkpoint::save(&est.export(), dir.join(format!("novelty{suffix}.advk")))?;
        }
        Ok(())
    }

    pub fn finish(self, records: Vec<MetricsRecord>, policy_losses: Vec<f64>) -> TrainOutcome {
        TrainOutcome {
            records,
            policy_losses,
            model: self.model,
            estimator: self.estimator,
        }
    }
}

/// Runs the configured number of epochs in memory.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    run(cfg, None)
}

/// Runs and writes `config.txt`, `metrics.jsonl` and checkpoints into `dir`.
pub fn train_to_dir(cfg: &RunConfig, dir: &Path) -> Result<TrainOutcome> {
    run(cfg, Some(dir))
}

fn run(cfg: &RunConfig, dir: Option<&Path>) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(cfg)?;
    let mut writer = match dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            std::fs::write(d.join("config.txt"), cfg.to_text())?;
            Some(MetricsWriter::create(&d.join("metrics.jsonl"))?)
        }
        None => None,
    };
    let mut records = Vec::with_capacity(cfg.training.epochs);
    let mut losses = Vec::new();
    for _ in 0..cfg.training.epochs {
        let (rec, stats) = trainer.run_epoch()?;
        if let Some(w) = writer.as_mut() {
            w.write(&rec)?;
        }
        if let (Some(d), k) = (dir, cfg.output.checkpoint_every) {
            if k > 0 && (rec.epoch + 1) % k == 0 {
                trainer.save_checkpoints(d, &format!(".epoch{}", rec.epoch))?;
            }
        }
        losses.extend(stats.policy_losses);
        records.push(rec);
    }
    if let Some(d) = dir {
        trainer.save_checkpoints(d, "")?;
    }
    Ok(trainer.finish(records, losses))
}
