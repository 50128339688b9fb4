//! Episodic MDPs with sparse rewards and exact state snapshots.

mod grid_maze;
mod point_goal;
mod sparse_chain;

pub use grid_maze::GridMaze;
pub use point_goal::PointGoal;
pub use sparse_chain::{SparseChain, LEFT, RIGHT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ActionKind {
    Discrete(usize),
    Continuous { dim: usize, low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub action: ActionKind,
    pub horizon: usize,
    /// Observations are 0/1 valued (one-hot or bitplanes).
    pub binary_obs: bool,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.horizon == 0 {
            return Err(Error::Config("observation dim and horizon must be positive".into()));
        }
        match self.action {
            ActionKind::Discrete(0) => Err(Error::Config("empty discrete action set".into())),
            ActionKind::Continuous { dim, low, high } if dim == 0 || !(low < high) => {
                Err(Error::Config(format!("bad continuous action bounds [{low}, {high}]")))
            }
            _ => Ok(()),
        }
    }

    /// Checks an action against this spec.
    pub fn check_action(&self, action: &Action) -> Result<()> {
        match (&self.action, action) {
            (ActionKind::Discrete(n), Action::Discrete(a)) if a < n => Ok(()),
            (ActionKind::Discrete(n), Action::Discrete(a)) => {
                Err(Error::InvalidAction(format!("discrete action {a} out of range {n}")))
            }
            (ActionKind::Continuous { dim, low, high }, Action::Continuous(v)) => {
                if v.len() != *dim {
                    return Err(Error::InvalidAction(format!("expected {dim} dims, got {}", v.len())));
                }
                if v.iter().any(|x| !x.is_finite() || *x < *low || *x > *high) {
                    return Err(Error::InvalidAction(format!("{v:?} outside [{low}, {high}]")));
                }
                Ok(())
            }
            _ => Err(Error::InvalidAction("action kind does not match environment".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

/// Full simulator state tagged with the identity of the environment that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateSnapshot {
    pub env_tag: String,
    pub bytes: Vec<u8>,
}

impl StateSnapshot {
    /// Identity key: the tag and payload together.
    pub fn key(&self) -> Vec<u8> {
        let mut k = self.env_tag.as_bytes().to_vec();
        k.push(0);
        k.extend_from_slice(&self.bytes);
        k
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// Episode over: goal reached or horizon hit.
    pub done: bool,
    /// Episode ended by reaching a terminal state (not by the horizon).
    pub terminal: bool,
    pub success: bool,
    pub snapshot: Option<StateSnapshot>,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode from the initial-state distribution.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: &Action) -> Result<Transition>;

    fn snapshot(&self) -> StateSnapshot;

    /// Returns the simulator to a captured state, step counter included.
    fn restore(&mut self, snapshot: &StateSnapshot) -> Result<Vec<f64>>;

    /// Current observation.
    fn observe(&self) -> Vec<f64>;

    /// Restarts the horizon budget at the current state.
    fn reset_clock(&mut self);

    fn name(&self) -> &'static str;
}

pub(crate) struct SnapReader<'a> {
    buf: &'a [u8],
}

impl<'a> SnapReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.buf.len() < N {
            return Err(Error::Snapshot("truncated snapshot".into()));
        }
        let (h, t) = self.buf.split_at(N);
        self.buf = t;
        Ok(h.try_into().unwrap())
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        self.take::<8>().map(f64::from_le_bytes)
    }

    pub(crate) fn bool(&mut self) -> Result<bool> {
        match self.take::<1>()?[0] {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Snapshot(format!("bad flag byte {b}"))),
        }
    }

    pub(crate) fn finish(self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(Error::Snapshot("trailing snapshot bytes".into()))
        }
    }
}

pub(crate) fn check_tag(expected: &str, snap: &StateSnapshot) -> Result<()> {
    if snap.env_tag != expected {
        return Err(Error::Snapshot(format!(
            "snapshot from `{}` cannot restore `{expected}`",
            snap.env_tag
        )));
    }
    Ok(())
}
