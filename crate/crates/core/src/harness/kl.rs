//! Histogram estimates of the KL divergence between score samples.

pub const DEFAULT_BINS: usize = 20;
pub const SMOOTHING: f64 = 1e-6;

/// Counts per equal-width bin over `[lo, hi]`; the top edge falls in the last bin and
/// out-of-range values are clamped.
pub fn histogram(xs: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let width = hi - lo;
    for &x in xs {
        let i = if width > 0.0 {
            (((x - lo) / width) * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize
        } else {
            0
        };
        counts[i] += 1;
    }
    counts
}

/// `p_i = (c_i / n + eps) / (1 + bins * eps)`.
pub fn smoothed(counts: &[usize], eps: f64) -> Vec<f64> {
    let n: usize = counts.iter().sum();
    let denom = 1.0 + counts.len() as f64 * eps;
    counts
        .iter()
        .map(|&c| {
            let frac = if n == 0 { 0.0 } else { c as f64 / n as f64 };
            (frac + eps) / denom
        })
        .collect()
}

/// `sum_i p_i ln(p_i / q_i)`.
pub fn discrete_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum()
}

/// `KL(P || Q)` between the smoothed histograms of two samples on shared edges.
pub fn histogram_kl(p: &[f64], q: &[f64], lo: f64, hi: f64, bins: usize, eps: f64) -> f64 {
    discrete_kl(&smoothed(&histogram(p, lo, hi, bins), eps), &smoothed(&histogram(q, lo, hi, bins), eps))
}

/// Rescales every group by the pooled minimum and maximum onto `[0, 1]`.
///
/// Returns `None` when the pooled scores are all equal.
pub fn pooled_minmax(groups: &[&[f64]]) -> Option<Vec<Vec<f64>>> {
    let all = groups.iter().flat_map(|g| g.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if !(hi > lo) {
        return None;
    }
    Some(
        groups
            .iter()
            .map(|g| g.iter().map(|x| (x - lo) / (hi - lo)).collect())
            .collect(),
    )
}
