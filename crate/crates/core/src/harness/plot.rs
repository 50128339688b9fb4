//! Aggregates metrics files across seeds into SVG band charts and CSV tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::experiments::Table;
use super::metrics::{read_metrics, MetricsRecord};
use crate::error::{Error, Result};

/// Metrics drawn by [`emit_plots`].
pub const PLOTTED: [&str; 9] = [
    "mean_return",
    "success_rate",
    "eval_success_rate",
    "mean_bonus",
    "mu_b",
    "sigma_b",
    "policy_loss",
    "entropy",
    "novelty_loss",
];

/// Mean and population std of one metric per epoch across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub epochs: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub runs: Vec<usize>,
}

fn field(rec: &MetricsRecord, metric: &str) -> Option<f64> {
    serde_json::to_value(rec).ok()?.get(metric)?.as_f64()
}

pub fn aggregate(label: &str, runs: &[Vec<MetricsRecord>], metric: &str) -> Result<Series> {
    let mut by_epoch: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for run in runs {
        for rec in run {
            if let Some(v) = field(rec, metric) {
                by_epoch.entry(rec.epoch).or_default().push(v);
            }
        }
    }
    if by_epoch.is_empty() {
        return Err(Error::Metrics(format!("no values of `{metric}` for `{label}`")));
    }
    let mut s = Series {
        label: label.to_string(),
        epochs: Vec::new(),
        mean: Vec::new(),
        std: Vec::new(),
        runs: Vec::new(),
    };
    for (epoch, vals) in by_epoch {
        let n = vals.len() as f64;
        let m = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        s.epochs.push(epoch);
        s.mean.push(m);
        s.std.push(var.sqrt());
        s.runs.push(vals.len());
    }
    Ok(s)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// SVG 1.1 line chart of several series with shaded mean ± std bands.
pub fn render_svg(title: &str, series: &[Series]) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let xs = series.iter().flat_map(|s| s.epochs.iter().map(|&e| e as f64));
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let ys = series
        .iter()
        .flat_map(|s| s.mean.iter().zip(&s.std).flat_map(|(m, d)| [m - d, m + d]));
    let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let xspan = if x1 > x0 { x1 - x0 } else { 1.0 };
    let px = |x: f64| pad + (x - x0) / xspan * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#, w / 2.0, esc(title));
    let _ = writeln!(
        out,
        r#"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    for (v, y) in [(y0, h - pad), (y1, pad)] {
        let _ = writeln!(out, r#"<text x="{}" y="{y}" text-anchor="end" font-family="sans-serif" font-size="11">{v:.3}</text>"#, pad - 4.0);
    }
    for (v, x) in [(x0, pad), (x1, w - pad)] {
        let _ = writeln!(out, r#"<text x="{x}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{v}</text>"#, h - pad + 16.0);
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper: Vec<String> = s.epochs.iter().zip(s.mean.iter().zip(&s.std)).map(|(&e, (m, d))| format!("{:.2},{:.2}", px(e as f64), py(m + d))).collect();
        let lower: Vec<String> = s.epochs.iter().zip(s.mean.iter().zip(&s.std)).rev().map(|(&e, (m, d))| format!("{:.2},{:.2}", px(e as f64), py(m - d))).collect();
        let _ = writeln!(out, r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, upper.join(" "), lower.join(" "));
        let line: Vec<String> = s.epochs.iter().zip(&s.mean).map(|(&e, m)| format!("{:.2},{:.2}", px(e as f64), py(*m))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            w - pad - 120.0,
            pad + 16.0 * (i as f64 + 1.0),
            esc(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else if p.extension().is_some_and(|x| x == "jsonl") {
            out.push(p);
        }
    }
    Ok(())
}

/// Curve label of a metrics file: its directory relative to the input root, with a trailing
/// `seed<k>` component dropped so that seeds of one configuration share a curve.
fn label_of(root: &Path, file: &Path) -> String {
    let dir = file.parent().unwrap_or(root);
    let rel = dir.strip_prefix(root).unwrap_or(dir);
    let mut parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
    if parts.last().is_some_and(|p| p.strip_prefix("seed").is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))) {
        parts.pop();
    }
    if parts.is_empty() {
        "run".into()
    } else {
        parts.join("/")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotReport {
    pub files: usize,
    pub skipped_lines: usize,
    pub written: Vec<PathBuf>,
}

/// Reads every `*.jsonl` under `input` (or `input` itself) and writes one SVG and one CSV per
/// plotted metric into `output`.
pub fn emit_plots(input: &Path, output: &Path) -> Result<PlotReport> {
    let mut files = Vec::new();
    if input.is_dir() {
        collect_files(input, &mut files)?;
    } else {
        files.push(input.to_path_buf());
    }
    if files.is_empty() {
        return Err(Error::Metrics(format!("no metrics files under {}", input.display())));
    }
    let root = if input.is_dir() { input } else { input.parent().unwrap_or(input) };
    let mut groups: BTreeMap<String, Vec<Vec<MetricsRecord>>> = BTreeMap::new();
    let mut skipped_lines = 0;
    for f in &files {
        let (recs, skipped) = read_metrics(f)?;
        skipped_lines += skipped;
        if !recs.is_empty() {
            groups.entry(label_of(root, f)).or_default().push(recs);
        }
    }
    if groups.is_empty() {
        return Err(Error::Metrics("metrics files hold no records".into()));
    }
    std::fs::create_dir_all(output)?;
    let mut written = Vec::new();
    for metric in PLOTTED {
        let series: Vec<Series> = groups.iter().filter_map(|(label, runs)| aggregate(label, runs, metric).ok()).collect();
        if series.is_empty() {
            continue;
        }
        let svg = output.join(format!("{metric}.svg"));
        std::fs::write(&svg, render_svg(metric, &series))?;
        let mut table = Table::new(&["label", "epoch", "mean", "std", "runs"]);
        for s in &series {
            for i in 0..s.epochs.len() {
                table.push(vec![s.label.clone(), s.epochs[i].to_string(), s.mean[i].to_string(), s.std[i].to_string(), s.runs[i].to_string()]);
            }
        }
        let csv = output.join(format!("{metric}.csv"));
        table.write_csv(std::fs::File::create(&csv)?)?;
        written.push(svg);
        written.push(csv);
    }
    Ok(PlotReport {
        files: files.len(),
        skipped_lines,
        written,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: usize, v: f64) -> MetricsRecord {
        MetricsRecord {
            epoch,
            mean_return: v,
            ..MetricsRecord::default()
        }
    }

    #[test]
    fn constant_seeds_have_zero_band() {
        let runs: Vec<_> = (0..6).map(|_| vec![rec(0, 2.5), rec(1, 2.5)]).collect();
        let s = aggregate("x", &runs, "mean_return").unwrap();
        assert_eq!(s.mean, vec![2.5, 2.5]);
        assert_eq!(s.std, vec![0.0, 0.0]);
        let one = aggregate("x", &runs[..1], "mean_return").unwrap();
        assert_eq!(one.std, vec![0.0, 0.0]);
    }

    #[test]
    fn empty_series_is_an_error() {
        assert!(aggregate("x", &[], "mean_return").is_err());
        assert!(aggregate("x", &[vec![rec(0, 1.0)]], "eval_success_rate").is_err());
    }

    #[test]
    fn labels_merge_seed_dirs() {
        let root = Path::new("/r");
        assert_eq!(label_of(root, Path::new("/r/bigan/seed3/metrics.jsonl")), "bigan");
        assert_eq!(label_of(root, Path::new("/r/rnd/metrics.jsonl")), "rnd");
        assert_eq!(label_of(root, Path::new("/r/metrics.jsonl")), "run");
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let s = aggregate("a<b", &[vec![rec(0, 1.0), rec(1, 2.0)]], "mean_return").unwrap();
        let svg = render_svg("t", &[s]);
        assert!(svg.starts_with("<?xml") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
    }
}
