//! PPO with separate extrinsic and intrinsic value heads.
//!
//! The policy is trained on the augmented advantage `A = A_e + beta * A_i`, where each
//! stream has its own GAE estimate, discount and value head.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::autodiff::{Tape, Var};
use crate::env::{Action, ActionKind, EnvSpec};
use crate::error::{Error, Result};
use crate::nn::{Activation, Graph, Mlp};
use crate::optim::Adam;
use crate::rng::Rng;
use crate::tensor::{ParamSet, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma_e: f64,
    pub gamma_i: f64,
    pub lambda: f64,
    pub beta: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy: f64,
    pub lr: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma_e: 0.99,
            gamma_i: 0.95,
            lambda: 0.95,
            beta: 0.3,
            epochs: 4,
            minibatch: 64,
            entropy: 0.01,
            lr: 3e-4,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            hidden: 64,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("ppo.clip must lie in (0, 1)");
        }
        if !(self.gamma_e > 0.0 && self.gamma_e <= 1.0) || !(self.gamma_i > 0.0 && self.gamma_i <= 1.0) {
            return bad("ppo discounts must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("ppo.lambda must lie in [0, 1]");
        }
        if !(self.beta >= 0.0) {
            return bad("ppo.beta must be non-negative");
        }
        if self.epochs == 0 || self.minibatch == 0 || self.hidden == 0 {
            return bad("ppo.epochs, ppo.minibatch and ppo.hidden must be positive");
        }
        if !(self.lr > 0.0) || !(self.entropy >= 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("ppo.lr and ppo.max_grad_norm must be positive, ppo.entropy non-negative");
        }
        Ok(())
    }
}

/// Generalized advantage estimation.
///
/// `values` holds one entry per reward plus the bootstrap value of the state after the last
/// step. `dones[t]` cuts the recursion after step `t` (no bootstrap across it).
pub fn compute_gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    if values.len() != rewards.len() + 1 || dones.len() != rewards.len() {
        return Err(Error::LengthMismatch(format!(
            "gae: {} rewards, {} values (need +1), {} done flags",
            rewards.len(),
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; rewards.len()];
    let mut next = 0.0;
    for t in (0..rewards.len()).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        next = delta + gamma * lambda * live * next;
        adv[t] = next;
    }
    Ok(adv)
}

/// Elementwise `a_e + beta * a_i`.
pub fn augmented_advantage(a_e: &[f64], a_i: &[f64], beta: f64) -> Result<Vec<f64>> {
    if a_e.len() != a_i.len() {
        return Err(Error::LengthMismatch(format!("{} extrinsic vs {} intrinsic advantages", a_e.len(), a_i.len())));
    }
    Ok(a_e.iter().zip(a_i).map(|(e, i)| e + beta * i).collect())
}

/// Shifts and scales to zero mean and unit (population) std; constant input maps to zeros.
pub fn normalize(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    xs.iter().map(|x| (x - mean) / (std + 1e-8)).collect()
}

/// One term of the clipped surrogate: `min(r * A, clip(r, 1 - eps, 1 + eps) * A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Policy network plus the two value heads, all in one parameter set under the prefixes
/// `pi.`, `ve.` and `vi.`.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub action: ActionKind,
    pub policy: Mlp,
    pub value_e: Mlp,
    pub value_i: Mlp,
    pub params: ParamSet,
    pub optimizer: Adam,
}

pub const LOG_STD: &str = "pi.log_std";
pub const GROUPS: [&str; 3] = ["pi.", "ve.", "vi."];

/// Output of one policy query.
#[derive(Debug, Clone, PartialEq)]
pub struct ActSample {
    /// Sampled action as stored for log-prob evaluation (unclipped for continuous actions).
    pub raw: Vec<f64>,
    /// Action to send to the environment.
    pub action: Action,
    pub log_prob: f64,
    pub value_e: f64,
    pub value_i: f64,
}

impl ActorCritic {
    pub fn new(spec: &EnvSpec, cfg: &PpoConfig, rng: &mut Rng) -> Result<Self> {
        let mut params = ParamSet::new();
        let h = cfg.hidden;
        let out = match spec.action {
            ActionKind::Discrete(n) => n,
            ActionKind::Continuous { dim, .. } => dim,
        };
        let policy = Mlp::with_output_gain(
            &mut params,
            "pi",
            &[spec.obs_dim, h, h, out],
            Activation::Tanh,
            Activation::Identity,
            0.01,
            rng,
        )?;
        if let ActionKind::Continuous { dim, .. } = spec.action {
            params.insert(LOG_STD, Tensor::new(vec![1, dim], vec![-0.5; dim])?)?;
        }
        let value_e = Mlp::new(&mut params, "ve", &[spec.obs_dim, h, h, 1], Activation::Tanh, Activation::Identity, rng)?;
        let value_i = Mlp::new(&mut params, "vi", &[spec.obs_dim, h, h, 1], Activation::Tanh, Activation::Identity, rng)?;
        Ok(Self {
            action: spec.action.clone(),
            policy,
            value_e,
            value_i,
            params,
            optimizer: Adam::new(cfg.lr),
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.input_dim()
    }

    /// Log-probabilities of `actions` (one row each) and the mean policy entropy.
    fn log_prob_graph(&self, params: &ParamSet, tape: &mut Tape, x: Var, actions: &[Vec<f64>]) -> Result<(Var, Var)> {
        let head = self.policy.forward(tape, params, x)?;
        match self.action {
            ActionKind::Discrete(n) => {
                let logp_all = tape.log_softmax(head)?;
                let idx = actions
                    .iter()
                    .map(|a| {
                        let i = a.first().copied().unwrap_or(-1.0);
                        if i >= 0.0 && (i as usize) < n && i.fract() == 0.0 {
                            Ok(i as usize)
                        } else {
                            Err(Error::InvalidAction(format!("{a:?} is not a discrete action < {n}")))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                let logp = tape.gather(logp_all, &idx)?;
                let p = tape.exp(logp_all)?;
                let plogp = tape.mul(p, logp_all)?;
                let rows = tape.sum_cols(plogp)?;
                let neg_ent = tape.mean(rows)?;
                let ent = tape.neg(neg_ent)?;
                Ok((logp, ent))
            }
            ActionKind::Continuous { dim, .. } => {
                let rows = actions.len();
                let mut flat = Vec::with_capacity(rows * dim);
                for a in actions {
                    if a.len() != dim {
                        return Err(Error::InvalidAction(format!("expected {dim}-dim action")));
                    }
                    flat.extend_from_slice(a);
                }
                let a = tape.constant(rows, dim, flat)?;
                let log_std = tape.param(params, LOG_STD)?;
                let diff = tape.sub(a, head)?;
                let neg_log_std = tape.neg(log_std)?;
                let inv_std = tape.exp(neg_log_std)?;
                let z = tape.mul(diff, inv_std)?;
                let z2 = tape.square(z)?;
                let quad = tape.sum_cols(z2)?;
                let half = tape.scale(quad, -0.5)?;
                let ls = tape.sum(log_std)?;
                let lp = tape.sub(half, ls)?;
                let logp = tape.add_scalar(lp, -0.5 * dim as f64 * (2.0 * PI).ln())?;
                let ent = tape.add_scalar(ls, 0.5 * dim as f64 * (1.0 + (2.0 * PI).ln()))?;
                Ok((logp, ent))
            }
        }
    }

    /// Log-probabilities of a batch of actions under the current parameters.
    pub fn log_probs(&self, obs: &[Vec<f64>], actions: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let x = tape.input(&Tensor::from_rows(obs)?)?;
        let (logp, _) = self.log_prob_graph(&self.params, &mut tape, x, actions)?;
        Ok(tape.value(logp).data().to_vec())
    }

    /// Extrinsic and intrinsic value estimates for a batch of observations.
    pub fn values(&self, obs: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let x = tape.input(&Tensor::from_rows(obs)?)?;
        let ve = self.value_e.forward(&mut tape, &self.params, x)?;
        let vi = self.value_i.forward(&mut tape, &self.params, x)?;
        Ok((tape.value(ve).data().to_vec(), tape.value(vi).data().to_vec()))
    }

    /// Samples an action for a single observation.
    pub fn act(&self, obs: &[f64], rng: &mut Rng) -> Result<ActSample> {
        let mut tape = Tape::new();
        let x = tape.input(&Tensor::row(obs))?;
        if tape.dims(x).1 != self.obs_dim() {
            return Err(Error::Shape {
                op: "act",
                expected: vec![self.obs_dim()],
                got: vec![obs.len()],
            });
        }
        let head = self.policy.forward(&mut tape, &self.params, x)?;
        let out = tape.value(head).data().to_vec();
        let (raw, action) = match self.action {
            ActionKind::Discrete(_) => {
                let m = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = out.iter().map(|l| (l - m).exp()).collect();
                let total: f64 = w.iter().sum();
                let u: f64 = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut pick = w.len() - 1;
                for (i, wi) in w.iter().enumerate() {
                    acc += wi;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                (vec![pick as f64], Action::Discrete(pick))
            }
            ActionKind::Continuous { low, high, .. } => {
                let log_std = self.params.get(LOG_STD)?.data();
                let raw: Vec<f64> = out
                    .iter()
                    .zip(log_std)
                    .map(|(mu, ls)| mu + ls.exp() * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let clipped = raw.iter().map(|a| a.clamp(low, high)).collect();
                (raw, Action::Continuous(clipped))
            }
        };
        let (logp, _) = self.log_prob_graph(&self.params, &mut tape, x, std::slice::from_ref(&raw))?;
        let log_prob = tape.scalar(logp);
        let ve = self.value_e.forward(&mut tape, &self.params, x)?;
        let vi = self.value_i.forward(&mut tape, &self.params, x)?;
        Ok(ActSample {
            raw,
            action,
            log_prob,
            value_e: tape.scalar(ve),
            value_i: tape.scalar(vi),
        })
    }

    /// Action with the highest density/probability.
    pub fn greedy(&self, obs: &[f64]) -> Result<Action> {
        let mut tape = Tape::new();
        let x = tape.input(&Tensor::row(obs))?;
        let head = self.policy.forward(&mut tape, &self.params, x)?;
        let out = tape.value(head).data();
        Ok(match self.action {
            ActionKind::Discrete(_) => {
                let mut best = 0;
                for (i, v) in out.iter().enumerate() {
                    if *v > out[best] {
                        best = i;
                    }
                }
                Action::Discrete(best)
            }
            ActionKind::Continuous { low, high, .. } => Action::Continuous(out.iter().map(|a| a.clamp(low, high)).collect()),
        })
    }
}

/// One environment step as stored for optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub reward_e: f64,
    /// Raw novelty score of the next state.
    pub bonus: f64,
    /// Normalized intrinsic reward; filled at the end of the epoch.
    pub reward_i: f64,
    pub value_e: f64,
    pub value_i: f64,
    pub done: bool,
}

/// One episode's worth of steps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub epoch: usize,
    pub episode: usize,
    pub steps: Vec<Step>,
    /// Episode ended in a terminal state (no extrinsic bootstrap).
    pub terminal: bool,
    pub success: bool,
    /// Value estimates of the state after the last step.
    pub bootstrap_e: f64,
    pub bootstrap_i: f64,
}

impl Trajectory {
    pub fn extrinsic_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward_e).sum()
    }

    /// Extrinsic GAE; the stream is episodic, so a terminal end cuts the bootstrap.
    pub fn extrinsic_advantages(&self, gamma: f64, lambda: f64) -> Result<Vec<f64>> {
        let rewards: Vec<f64> = self.steps.iter().map(|s| s.reward_e).collect();
        let mut values: Vec<f64> = self.steps.iter().map(|s| s.value_e).collect();
        values.push(if self.terminal { 0.0 } else { self.bootstrap_e });
        let mut dones = vec![false; rewards.len()];
        if let (Some(last), true) = (dones.last_mut(), self.terminal) {
            *last = true;
        }
        compute_gae(&rewards, &values, &dones, gamma, lambda)
    }

    /// Intrinsic GAE; the stream is non-episodic, so it always bootstraps.
    pub fn intrinsic_advantages(&self, gamma: f64, lambda: f64) -> Result<Vec<f64>> {
        let rewards: Vec<f64> = self.steps.iter().map(|s| s.reward_i).collect();
        let mut values: Vec<f64> = self.steps.iter().map(|s| s.value_i).collect();
        values.push(self.bootstrap_i);
        let dones = vec![false; rewards.len()];
        compute_gae(&rewards, &values, &dones, gamma, lambda)
    }
}

/// Flattened optimization batch.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns_e: Vec<f64>,
    pub returns_i: Vec<f64>,
}

impl Batch {
    /// Builds a batch with advantages `A_e + beta * A_i` and per-stream returns-to-go.
    pub fn from_trajectories(trajs: &[Trajectory], cfg: &PpoConfig) -> Result<Self> {
        let mut b = Batch::default();
        for tr in trajs {
            let ae = tr.extrinsic_advantages(cfg.gamma_e, cfg.lambda)?;
            let ai = tr.intrinsic_advantages(cfg.gamma_i, cfg.lambda)?;
            let a = augmented_advantage(&ae, &ai, cfg.beta)?;
            for (k, s) in tr.steps.iter().enumerate() {
                b.obs.push(s.obs.clone());
                b.actions.push(s.action.clone());
                b.log_probs.push(s.log_prob);
                b.advantages.push(a[k]);
                b.returns_e.push(ae[k] + s.value_e);
                b.returns_i.push(ai[k] + s.value_i);
            }
        }
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss_e: f64,
    pub value_loss_i: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    /// Policy loss of every minibatch, in order.
    pub policy_losses: Vec<f64>,
}

/// Rows of one optimization minibatch; `advantages` are already normalized.
#[derive(Debug, Clone, Default)]
pub struct Minibatch<'a> {
    pub obs: Vec<&'a [f64]>,
    pub actions: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns_e: Vec<f64>,
    pub returns_i: Vec<f64>,
}

/// Handles to the terms of the PPO objective on one tape.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub policy: Var,
    pub value_e: Var,
    pub value_i: Var,
    pub entropy: Var,
    pub ratio: Var,
    pub log_ratio: Var,
}

impl ActorCritic {
    /// Clipped surrogate plus weighted value errors minus the entropy bonus, evaluated with
    /// `params` (normally `self.params`).
    pub fn loss_graph(&self, params: &ParamSet, tape: &mut Tape, mb: &Minibatch, cfg: &PpoConfig) -> Result<LossTerms> {
        let m = mb.obs.len();
        let x = tape.input(&Tensor::from_rows(&mb.obs)?)?;
        let (logp, entropy) = self.log_prob_graph(params, tape, x, &mb.actions)?;
        let old = tape.constant(m, 1, mb.old_log_probs.clone())?;
        let a = tape.constant(m, 1, mb.advantages.clone())?;
        let log_ratio = tape.sub(logp, old)?;
        let ratio = tape.exp(log_ratio)?;
        let s1 = tape.mul(ratio, a)?;
        let clipped = tape.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)?;
        let s2 = tape.mul(clipped, a)?;
        let surr = tape.min(s1, s2)?;
        let mean_surr = tape.mean(surr)?;
        let policy = tape.neg(mean_surr)?;

        let ve = self.value_e.forward(tape, params, x)?;
        let ret_e = tape.constant(m, 1, mb.returns_e.clone())?;
        let de = tape.sub(ve, ret_e)?;
        let value_e = tape.mean_square(de)?;
        let vi = self.value_i.forward(tape, params, x)?;
        let ret_i = tape.constant(m, 1, mb.returns_i.clone())?;
        let di = tape.sub(vi, ret_i)?;
        let value_i = tape.mean_square(di)?;

        let vsum = tape.add(value_e, value_i)?;
        let vterm = tape.scale(vsum, cfg.value_coef)?;
        let eterm = tape.scale(entropy, -cfg.entropy)?;
        let partial = tape.add(policy, vterm)?;
        let total = tape.add(partial, eterm)?;
        Ok(LossTerms {
            total,
            policy,
            value_e,
            value_i,
            entropy,
            ratio,
            log_ratio,
        })
    }
}

/// Runs the clipped-surrogate update over `cfg.epochs` shuffled passes of the batch.
///
/// Advantages are normalized over the whole batch before the surrogate is formed.
pub fn ppo_update(model: &mut ActorCritic, batch: &Batch, cfg: &PpoConfig, rng: &mut Rng) -> Result<UpdateStats> {
    if batch.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let n = batch.len();
    for (name, len) in [
        ("actions", batch.actions.len()),
        ("log_probs", batch.log_probs.len()),
        ("advantages", batch.advantages.len()),
        ("returns_e", batch.returns_e.len()),
        ("returns_i", batch.returns_i.len()),
    ] {
        if len != n {
            return Err(Error::LengthMismatch(format!("batch {name}: {len} vs {n} observations")));
        }
    }
    let adv = normalize(&batch.advantages);
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    let mut count = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let mb = Minibatch {
                obs: chunk.iter().map(|&i| batch.obs[i].as_slice()).collect(),
                actions: chunk.iter().map(|&i| batch.actions[i].clone()).collect(),
                old_log_probs: chunk.iter().map(|&i| batch.log_probs[i]).collect(),
                advantages: chunk.iter().map(|&i| adv[i]).collect(),
                returns_e: chunk.iter().map(|&i| batch.returns_e[i]).collect(),
                returns_i: chunk.iter().map(|&i| batch.returns_i[i]).collect(),
            };
            let m = chunk.len();
            let mut tape = Tape::new();
            let LossTerms {
                total: loss,
                policy: policy_loss,
                value_e: le,
                value_i: li,
                entropy,
                ratio,
                log_ratio: diff,
            } = model.loss_graph(&model.params, &mut tape, &mb, cfg)?;

            let ratios = tape.value(ratio).data().to_vec();
            let logd = tape.value(diff).data().to_vec();
            let pl = tape.scalar(policy_loss);
            stats.policy_losses.push(pl);
            stats.policy_loss += pl;
            stats.value_loss_e += tape.scalar(le);
            stats.value_loss_i += tape.scalar(li);
            stats.entropy += tape.scalar(entropy);
            stats.clip_fraction += ratios.iter().filter(|r| (*r - 1.0).abs() > cfg.clip).count() as f64 / m as f64;
            stats.approx_kl += logd.iter().map(|d| -d).sum::<f64>() / m as f64;
            count += 1.0;

            let grads = tape.backward(loss)?;
            model.params.zero_grads();
            model.params.accumulate(&grads);
            for g in GROUPS {
                model.params.clip_grad_norm(g, cfg.max_grad_norm);
            }
            model.optimizer.step(&mut model.params)?;
        }
    }
    stats.policy_loss /= count;
    stats.value_loss_e /= count;
    stats.value_loss_i /= count;
    stats.entropy /= count;
    stats.clip_fraction /= count;
    stats.approx_kl /= count;
    if !stats.policy_loss.is_finite() || !stats.value_loss_e.is_finite() || !stats.value_loss_i.is_finite() {
        return Err(Error::NonFinite("ppo loss".into()));
    }
    Ok(stats)
}
