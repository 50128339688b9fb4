//! Per-epoch metrics records, one JSON object per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsRecord {
    pub epoch: usize,
    /// Cumulative training episodes.
    pub episodes: usize,
    /// Cumulative environment steps, evaluation excluded.
    pub env_steps: usize,
    pub mean_return: f64,
    pub success_rate: f64,
    pub eval_success_rate: Option<f64>,
    pub mean_bonus: f64,
    pub max_bonus: f64,
    pub mu_b: f64,
    pub sigma_b: f64,
    pub mu_e: f64,
    pub mean_intrinsic: f64,
    pub memory_size: usize,
    pub memory_starts: usize,
    pub policy_loss: f64,
    pub value_loss_e: f64,
    pub value_loss_i: f64,
    pub entropy: f64,
    pub novelty_loss: Option<f64>,
    pub bonus_evals: usize,
    pub stats_updates: usize,
    pub ppo_updates: usize,
    pub novelty_updates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock: Option<f64>,
}

impl MetricsRecord {
    pub fn to_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Append-only JSONL sink that enforces increasing epoch numbers.
pub struct MetricsWriter {
    out: BufWriter<File>,
    last_epoch: Option<usize>,
}

impl MetricsWriter {
    /// Creates or truncates the file.
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
            last_epoch: None,
        })
    }

    pub fn append_to(path: &Path) -> Result<Self> {
        let last_epoch = if path.exists() {
            read_metrics(path)?.0.last().map(|r| r.epoch)
        } else {
            None
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            out: BufWriter::new(file),
            last_epoch,
        })
    }

    pub fn write(&mut self, rec: &MetricsRecord) -> Result<()> {
        if self.last_epoch.is_some_and(|e| rec.epoch <= e) {
            return Err(Error::Metrics(format!("epoch {} written after {:?}", rec.epoch, self.last_epoch)));
        }
        writeln!(self.out, "{}", rec.to_line()?)?;
        self.out.flush()?;
        self.last_epoch = Some(rec.epoch);
        Ok(())
    }
}

/// Reads records, skipping malformed lines. Returns the records and the number skipped.
pub fn read_metrics(path: &Path) -> Result<(Vec<MetricsRecord>, usize)> {
    let mut records = Vec::new();
    let mut skipped = 0;
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => records.push(r),
            Err(_) => skipped += 1,
        }
    }
    Ok((records, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_read_and_monotone() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let mut w = MetricsWriter::create(&p).unwrap();
        let mut r = MetricsRecord::default();
        w.write(&r).unwrap();
        assert!(w.write(&r).is_err());
        r.epoch = 1;
        r.mean_return = 0.25;
        w.write(&r).unwrap();
        drop(w);
        std::fs::write(&p, std::fs::read_to_string(&p).unwrap() + "{broken\n").unwrap();
        let (recs, skipped) = read_metrics(&p).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(skipped, 1);
        assert_eq!(recs[1], r);
        assert!(!recs[0].to_line().unwrap().contains("wall_clock"));
        let mut w = MetricsWriter::append_to(&p).unwrap();
        assert!(w.write(&r).is_err());
    }
}
