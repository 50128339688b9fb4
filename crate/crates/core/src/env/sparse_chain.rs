use super::{check_tag, Action, ActionKind, EnvSpec, Environment, SnapReader, StateSnapshot, Transition};
use crate::error::{Error, Result};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// Chain of `n` cells with one-hot observations. `right` advances one cell, `left` returns to
/// cell 0, and only arriving at the last cell pays reward 1 and ends the episode.
#[derive(Debug, Clone)]
pub struct SparseChain {
    spec: EnvSpec,
    tag: String,
    pos: usize,
    t: usize,
    done: bool,
}

impl SparseChain {
    pub fn new(length: usize, horizon: usize) -> Result<Self> {
        if length < 2 {
            return Err(Error::Config(format!("chain length must be >= 2, got {length}")));
        }
        let spec = EnvSpec {
            obs_dim: length,
            action: ActionKind::Discrete(2),
            horizon,
            binary_obs: true,
        };
        spec.validate()?;
        Ok(Self {
            spec,
            tag: format!("sparse_chain/n={length}/h={horizon}"),
            pos: 0,
            t: 0,
            done: false,
        })
    }

    pub fn length(&self) -> usize {
        self.spec.obs_dim
    }

    pub fn position(&self) -> usize {
        self.pos
    }
}

impl Environment for SparseChain {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.pos = 0;
        self.t = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<Transition> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        self.spec.check_action(action)?;
        let Action::Discrete(a) = action else { unreachable!() };
        self.pos = if *a == RIGHT { self.pos + 1 } else { 0 };
        self.t += 1;
        let terminal = self.pos == self.length() - 1;
        self.done = terminal || self.t >= self.spec.horizon;
        Ok(Transition {
            observation: self.observe(),
            reward: if terminal { 1.0 } else { 0.0 },
            done: self.done,
            terminal,
            success: terminal,
            snapshot: Some(self.snapshot()),
        })
    }

    fn snapshot(&self) -> StateSnapshot {
        let mut bytes = Vec::with_capacity(9);
        bytes.extend_from_slice(&(self.pos as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.t as u32).to_le_bytes());
        bytes.push(u8::from(self.done));
        StateSnapshot {
            env_tag: self.tag.clone(),
            bytes,
        }
    }

    fn reset_clock(&mut self) {
        self.t = 0;
    }

    fn restore(&mut self, snapshot: &StateSnapshot) -> Result<Vec<f64>> {
        check_tag(&self.tag, snapshot)?;
        let mut r = SnapReader::new(&snapshot.bytes);
        let pos = r.u32()? as usize;
        let t = r.u32()? as usize;
        let done = r.bool()?;
        r.finish()?;
        if pos >= self.length() || t > self.spec.horizon {
            return Err(Error::Snapshot("state outside chain".into()));
        }
        self.pos = pos;
        self.t = t;
        self.done = done;
        Ok(self.observe())
    }

    fn observe(&self) -> Vec<f64> {
        let mut o = vec![0.0; self.length()];
        o[self.pos] = 1.0;
        o
    }

    fn name(&self) -> &'static str {
        "sparse_chain"
    }
}
