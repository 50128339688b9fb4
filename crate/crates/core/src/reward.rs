//! Intrinsic reward normalization and episodic start-state memory.

use rand::Rng as _;

use crate::env::StateSnapshot;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Welford accumulator for count, mean and population variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut s = Self::new();
        s.extend(xs);
        s
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn extend(&mut self, xs: &[f64]) {
        xs.iter().for_each(|&x| self.push(x));
    }

    /// Combines two accumulators as if their streams had been concatenated.
    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }
}

pub const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizeVariant {
    /// `(B - mu_B + mu_e) / sigma_B`
    #[default]
    Standard,
    /// `(B - mu_B) / sigma_B + mu_e`
    Shifted,
}

impl std::str::FromStr for NormalizeVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "shifted" => Ok(Self::Shifted),
            _ => Err(Error::Config(format!("unknown normalize.variant `{s}`"))),
        }
    }
}

impl NormalizeVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Standard => "standard",
            Self::Shifted => "shifted",
        }
    }
}

/// Frozen normalization constants used to convert raw scores into intrinsic rewards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BonusNorm {
    pub mu_b: f64,
    pub sigma_b: f64,
    pub mu_e: f64,
}

impl BonusNorm {
    pub const WARM_UP: BonusNorm = BonusNorm {
        mu_b: 0.0,
        sigma_b: 1.0,
        mu_e: 0.0,
    };

    /// Snapshot of the running score and extrinsic-reward statistics. Fewer than two scores
    /// fall back to the warm-up constants.
    pub fn from_stats(bonus: &RunningStats, extrinsic: &RunningStats) -> Self {
        if bonus.count() < 2 {
            return Self::WARM_UP;
        }
        Self {
            mu_b: bonus.mean(),
            sigma_b: bonus.std(),
            mu_e: extrinsic.mean(),
        }
    }
}

pub fn normalize_bonus(b: f64, norm: &BonusNorm, variant: NormalizeVariant) -> f64 {
    let sigma = norm.sigma_b.max(SIGMA_FLOOR);
    match variant {
        NormalizeVariant::Standard => (b - norm.mu_b + norm.mu_e) / sigma,
        NormalizeVariant::Shifted => (b - norm.mu_b) / sigma + norm.mu_e,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    pub snapshot: StateSnapshot,
    pub score: f64,
    /// Offer index at which the current score was recorded.
    pub seq: u64,
}

/// The `k` highest-scoring distinct snapshots offered so far.
///
/// Ties keep the earlier entry: a newcomer must strictly beat the minimum, and the evicted
/// entry is the most recently recorded among those holding the minimum score.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TopK {
    capacity: usize,
    entries: Vec<MemoryEntry>,
    offers: u64,
}

impl TopK {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: Vec::with_capacity(capacity),
            offers: 0,
        }
    }

    pub fn offer(&mut self, snapshot: &StateSnapshot, score: f64) -> bool {
        let seq = self.offers;
        self.offers += 1;
        if self.capacity == 0 || !score.is_finite() {
            return false;
        }
        if let Some(e) = self.entries.iter_mut().find(|e| e.snapshot == *snapshot) {
            if score > e.score {
                e.score = score;
                e.seq = seq;
                return true;
            }
            return false;
        }
        let entry = MemoryEntry {
            snapshot: snapshot.clone(),
            score,
            seq,
        };
        if self.entries.len() < self.capacity {
            self.entries.push(entry);
            return true;
        }
        let (victim, min) = self
            .entries
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.score.total_cmp(&b.score).then(b.seq.cmp(&a.seq)))
            .map(|(i, e)| (i, e.score))
            .expect("capacity is positive");
        if score > min {
            self.entries[victim] = entry;
            true
        } else {
            false
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    /// Scores in descending order.
    pub fn scores(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.entries.iter().map(|e| e.score).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }
}

/// Read buffer from the previous epoch plus the write buffer being filled this epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicMemory {
    enabled: bool,
    epoch: usize,
    read: TopK,
    write: TopK,
}

impl EpisodicMemory {
    pub fn new(capacity: usize, enabled: bool) -> Self {
        Self {
            enabled,
            epoch: 0,
            read: TopK::new(capacity),
            write: TopK::new(capacity),
        }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn offer(&mut self, snapshot: &StateSnapshot, score: f64) -> bool {
        self.write.offer(snapshot, score)
    }

    pub fn read_buffer(&self) -> &TopK {
        &self.read
    }

    pub fn write_buffer(&self) -> &TopK {
        &self.write
    }

    /// Uniform draw from the previous epoch's memory, or `None` when the caller should reset.
    pub fn sample_start(&self, rng: &mut Rng) -> Option<&StateSnapshot> {
        if !self.enabled || self.epoch == 0 || self.read.is_empty() {
            return None;
        }
        let i = rng.random_range(0..self.read.len());
        Some(&self.read.entries[i].snapshot)
    }

    pub fn rollover(&mut self) {
        let cap = self.write.capacity;
        self.read = std::mem::replace(&mut self.write, TopK::new(cap));
        self.epoch += 1;
    }
}
