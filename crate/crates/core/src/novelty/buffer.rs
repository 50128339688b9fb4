use std::collections::VecDeque;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Bounded FIFO of visited observations; the oldest state is dropped on overflow.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBuffer {
    capacity: usize,
    states: VecDeque<Vec<f64>>,
}

impl StateBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("state buffer capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            states: VecDeque::with_capacity(capacity.min(4096)),
        })
    }

    pub fn from_states(states: Vec<Vec<f64>>) -> Result<Self> {
        let mut b = Self::new(states.len().max(1))?;
        b.extend(states);
        Ok(b)
    }

    pub fn push(&mut self, s: Vec<f64>) {
        if self.states.len() == self.capacity {
            self.states.pop_front();
        }
        self.states.push_back(s);
    }

    pub fn extend(&mut self, it: impl IntoIterator<Item = Vec<f64>>) {
        for s in it {
            self.push(s);
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.states.iter()
    }

    /// Uniform draw of `n` states with replacement, flattened row-major.
    pub fn sample_flat(&self, n: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let mut out = Vec::with_capacity(n * self.states[0].len());
        for _ in 0..n {
            let i = rng.random_range(0..self.states.len());
            out.extend_from_slice(&self.states[i]);
        }
        Ok(out)
    }
}
