//! Offline novelty experiments and hyperparameter grids.

use std::io::Write;

use super::config::{EnvName, RunConfig};
use super::corpus::{ClassCorpus, TwoRoomCorpus};
use super::kl::{histogram_kl, pooled_minmax, SMOOTHING};
use super::train::train;
use crate::error::{Error, Result};
use crate::novelty::{build_estimator, EstimatorConfig, NoveltyEstimator, StateBuffer};

fn fitted(cfg: &EstimatorConfig, train: Vec<Vec<f64>>, steps: usize, seed: u64) -> Result<Box<dyn NoveltyEstimator>> {
    let dim = train.first().map(Vec::len).ok_or(Error::EmptyBuffer)?;
    let mut est = build_estimator(cfg, dim, true, seed)?
        .ok_or_else(|| Error::Config("novelty experiments need an estimator, not `none`".into()))?;
    est.fit(&StateBuffer::from_states(train)?, steps)?;
    Ok(est)
}

/// Held-out score distributions and the two KL objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct NoveltyEval {
    /// `KL(D1b || D1a) - KL(D2b || D1a)` after training on D1a.
    pub setting1: f64,
    /// `KL(D1b || D1a) + KL(D2b || D2a)` after training on D1a and D2a.
    pub setting2: f64,
    pub kl_1b_1a: f64,
    pub kl_2b_1a: f64,
    pub kl2_1b_1a: f64,
    pub kl2_2b_2a: f64,
    /// Pooled scores of one setting were all equal; its KL terms are reported as 0.
    pub degenerate1: bool,
    pub degenerate2: bool,
    /// Normalized Setting 1 scores of D1a, D1b, D2b.
    pub scores1: [Vec<f64>; 3],
    /// Normalized Setting 2 scores of D1a, D1b, D2a, D2b.
    pub scores2: [Vec<f64>; 4],
}

pub fn eval_novelty_settings(corpus: &TwoRoomCorpus, cfg: &EstimatorConfig, fit_steps: usize, bins: usize, seed: u64) -> Result<NoveltyEval> {
    let est = fitted(cfg, corpus.d1a.clone(), fit_steps, seed)?;
    let raw1 = [
        est.score_batch(&corpus.d1a)?,
        est.score_batch(&corpus.d1b)?,
        est.score_batch(&corpus.d2b)?,
    ];
    let mut both = corpus.d1a.clone();
    both.extend(corpus.d2a.iter().cloned());
    let est = fitted(cfg, both, fit_steps, seed)?;
    let raw2 = [
        est.score_batch(&corpus.d1a)?,
        est.score_batch(&corpus.d1b)?,
        est.score_batch(&corpus.d2a)?,
        est.score_batch(&corpus.d2b)?,
    ];
    let kl = |p: &[f64], q: &[f64]| histogram_kl(p, q, 0.0, 1.0, bins, SMOOTHING);
    let n1 = pooled_minmax(&[&raw1[0], &raw1[1], &raw1[2]]);
    let n2 = pooled_minmax(&[&raw2[0], &raw2[1], &raw2[2], &raw2[3]]);
    let (degenerate1, degenerate2) = (n1.is_none(), n2.is_none());
    let s1 = n1.unwrap_or_else(|| raw1.iter().map(|g| vec![0.0; g.len()]).collect());
    let s2 = n2.unwrap_or_else(|| raw2.iter().map(|g| vec![0.0; g.len()]).collect());
    let (kl_1b_1a, kl_2b_1a) = if degenerate1 { (0.0, 0.0) } else { (kl(&s1[1], &s1[0]), kl(&s1[2], &s1[0])) };
    let (kl2_1b_1a, kl2_2b_2a) = if degenerate2 { (0.0, 0.0) } else { (kl(&s2[1], &s2[0]), kl(&s2[3], &s2[2])) };
    let mut s1 = s1.into_iter();
    let mut s2 = s2.into_iter();
    let next = |it: &mut std::vec::IntoIter<Vec<f64>>| it.next().expect("group count fixed");
    Ok(NoveltyEval {
        setting1: kl_1b_1a - kl_2b_1a,
        setting2: kl2_1b_1a + kl2_2b_2a,
        kl_1b_1a,
        kl_2b_1a,
        kl2_1b_1a,
        kl2_2b_2a,
        degenerate1,
        degenerate2,
        scores1: [next(&mut s1), next(&mut s1), next(&mut s1)],
        scores2: [next(&mut s2), next(&mut s2), next(&mut s2), next(&mut s2)],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountVsScore {
    pub fractions: Vec<f64>,
    /// Mean score over held-out samples of the second class, per fraction.
    pub mean_scores: Vec<f64>,
    /// Held-out self-score of the base class for the model trained on the base class only.
    pub baseline: f64,
}

/// Trains a fresh estimator per fraction `p` on the base class plus the first `p` share of the
/// second class's training samples.
pub fn count_vs_score(classes: &ClassCorpus, fractions: &[f64], cfg: &EstimatorConfig, fit_steps: usize, seed: u64) -> Result<CountVsScore> {
    let sorted = fractions.windows(2).all(|w| w[0] < w[1]);
    if fractions.is_empty() || !sorted || fractions[0] != 0.0 || *fractions.last().unwrap() != 1.0 {
        return Err(Error::Precondition(format!(
            "fractions must be strictly ascending from 0 to 1, got {fractions:?}"
        )));
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let mut mean_scores = Vec::with_capacity(fractions.len());
    let mut baseline = 0.0;
    for &p in fractions {
        let take = (p * classes.other_train.len() as f64).round() as usize;
        let mut data = classes.base_train.clone();
        data.extend(classes.other_train[..take].iter().cloned());
        let est = fitted(cfg, data, fit_steps, seed)?;
        mean_scores.push(mean(&est.score_batch(&classes.other_test)?));
        if p == 0.0 {
            baseline = mean(&est.score_batch(&classes.base_test)?);
        }
    }
    Ok(CountVsScore {
        fractions: fractions.to_vec(),
        mean_scores,
        baseline,
    })
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties; 0 when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridParam {
    Alpha,
    Beta,
}

impl std::str::FromStr for GridParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(Self::Alpha),
            "beta" => Ok(Self::Beta),
            _ => Err(Error::Config(format!("grid parameter must be alpha or beta, got `{s}`"))),
        }
    }
}

/// A CSV-ready table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub param: GridParam,
    pub best: f64,
    /// Per-value summary: value, then the objective means used for selection.
    pub summary: Vec<(f64, Vec<f64>)>,
    /// One row per (value, seed[, env]) cell plus summary rows.
    pub table: Table,
}

/// Seed of the `i`-th repetition.
pub fn rep_seed(root: u64, i: usize) -> u64 {
    root.wrapping_add(i as u64)
}

pub fn grid_search(param: GridParam, cfg: &RunConfig, values: &[f64]) -> Result<GridResult> {
    if values.is_empty() {
        return Err(Error::Precondition("grid search needs at least one value".into()));
    }
    match param {
        GridParam::Alpha => alpha_grid(cfg, values),
        GridParam::Beta => beta_grid(cfg, values),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Index of the minimal rank sum over several objectives (lower is better); earlier wins ties.
fn best_by_rank_sum(objectives: &[Vec<f64>]) -> usize {
    let n = objectives[0].len();
    let mut total = vec![0.0; n];
    for obj in objectives {
        for (t, r) in total.iter_mut().zip(ranks(obj)) {
            *t += r;
        }
    }
    (0..n).fold(0, |best, i| if total[i] < total[best] { i } else { best })
}

fn alpha_grid(cfg: &RunConfig, values: &[f64]) -> Result<GridResult> {
    let e = &cfg.experiment;
    let mut table = Table::new(&["alpha", "seed", "setting1", "setting2", "kl_1b_1a", "kl_2b_1a", "kl2_1b_1a", "kl2_2b_2a"]);
    let mut summary = Vec::new();
    for &alpha in values {
        let mut est = cfg.novelty.estimator(super::corpus::BITPLANE);
        est.method = crate::novelty::NoveltyMethod::Bigan;
        est.bigan.alpha = alpha;
        let (mut o1, mut o2) = (Vec::new(), Vec::new());
        for i in 0..e.seeds {
            let seed = rep_seed(cfg.training.seed, i);
            let corpus = super::corpus::two_room(seed, e.per_part, e.flip)?;
            let r = eval_novelty_settings(&corpus, &est, e.fit_steps, e.bins, seed)?;
            table.push(vec![
                alpha.to_string(),
                seed.to_string(),
                r.setting1.to_string(),
                r.setting2.to_string(),
                r.kl_1b_1a.to_string(),
                r.kl_2b_1a.to_string(),
                r.kl2_1b_1a.to_string(),
                r.kl2_2b_2a.to_string(),
            ]);
            o1.push(r.setting1);
            o2.push(r.setting2);
        }
        summary.push((alpha, vec![mean(&o1), mean(&o2)]));
    }
    let obj1: Vec<f64> = summary.iter().map(|s| s.1[0]).collect();
    let obj2: Vec<f64> = summary.iter().map(|s| s.1[1]).collect();
    for (v, m) in &summary {
        table.push(vec![v.to_string(), "mean".into(), m[0].to_string(), m[1].to_string(), String::new(), String::new(), String::new(), String::new()]);
    }
    let best = summary[best_by_rank_sum(&[obj1, obj2])].0;
    Ok(GridResult {
        param: GridParam::Alpha,
        best,
        summary,
        table,
    })
}

fn beta_grid(cfg: &RunConfig, values: &[f64]) -> Result<GridResult> {
    let e = &cfg.experiment;
    let mut table = Table::new(&["beta", "env", "seed", "mean_return", "final_success_rate"]);
    let mut summary = Vec::new();
    for &beta in values {
        let mut returns = Vec::new();
        for &env in &e.suite {
            for i in 0..e.seeds {
                let mut run = cfg.clone();
                run.ppo.beta = beta;
                run.env.name = env;
                run.training.seed = rep_seed(cfg.training.seed, i);
                let out = train(&run)?;
                let ret = mean(&out.records.iter().map(|r| r.mean_return).collect::<Vec<_>>());
                let last = out.records.last().map_or(0.0, |r| r.success_rate);
                table.push(vec![
                    beta.to_string(),
                    env.as_str().into(),
                    run.training.seed.to_string(),
                    ret.to_string(),
                    last.to_string(),
                ]);
                returns.push(ret);
            }
        }
        summary.push((beta, vec![mean(&returns)]));
    }
    for (v, m) in &summary {
        table.push(vec![v.to_string(), "all".into(), "mean".into(), m[0].to_string(), String::new()]);
    }
    let best = summary
        .iter()
        .fold(&summary[0], |b, s| if s.1[0] > b.1[0] { s } else { b })
        .0;
    Ok(GridResult {
        param: GridParam::Beta,
        best,
        summary,
        table,
    })
}

/// Environments of the toy suite, for display.
pub fn suite_names(suite: &[EnvName]) -> String {
    suite.iter().map(|e| e.as_str()).collect::<Vec<_>>().join(",")
}
