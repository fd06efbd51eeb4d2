//! Report data: histograms, KDE curves, paired top-k bars, run manifests.
//!
//! Everything here is emitted as plain data; [`svg`] renders optional
//! self-contained figures from the same values.

pub mod svg;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cpd::Cpd;
use crate::error::{Error, Result};
use crate::metrics::{AggregateReport, System};

/// Density-normalized histogram: `sum(density * width) == 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramData {
    pub bin_edges: Vec<f64>,
    pub densities: Vec<f64>,
    pub n: usize,
}

impl HistogramData {
    pub fn area(&self) -> f64 {
        self.bin_edges
            .windows(2)
            .zip(&self.densities)
            .map(|(e, d)| (e[1] - e[0]) * d)
            .sum()
    }
}

/// Equal-width histogram over `[0, 1]`.
pub fn histogram(values: &[f64], n_bins: usize) -> Result<HistogramData> {
    histogram_range(values, 0.0, 1.0, n_bins)
}

/// Equal-width histogram over `[lo, hi]`; bins are left-inclusive and the
/// last bin is closed.
pub fn histogram_range(values: &[f64], lo: f64, hi: f64, n_bins: usize) -> Result<HistogramData> {
    if values.is_empty() {
        return Err(Error::Report("histogram of no values".into()));
    }
    if n_bins == 0 || !(hi > lo) {
        return Err(Error::Report(format!("invalid histogram layout [{lo}, {hi}] x {n_bins}")));
    }
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        if !(lo..=hi).contains(&v) {
            return Err(Error::Report(format!("value {v} outside [{lo}, {hi}]")));
        }
        let b = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let n = values.len();
    Ok(HistogramData {
        bin_edges: (0..=n_bins).map(|i| lo + i as f64 * width).collect(),
        densities: counts
            .iter()
            .map(|&c| c as f64 / (n as f64 * width))
            .collect(),
        n,
    })
}

/// Gaussian kernel density estimate, restricted for display to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub bandwidth: f64,
    /// Trapezoidal mass over `xs`; below one by whatever leaks past `[0, 1]`.
    pub mass_in_grid: f64,
    /// Set when the sample had no spread and the bandwidth floor was used.
    pub degenerate: bool,
}

pub const KDE_GRID_POINTS: usize = 512;
pub const KDE_BANDWIDTH_FLOOR: f64 = 1e-3;

/// Scott's rule: `n^(-1/5)` times the sample standard deviation.
pub fn scott_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    n.powf(-0.2) * var.sqrt()
}

pub fn kde(values: &[f64], bandwidth: Option<f64>) -> Result<KdeCurve> {
    if values.len() < 2 {
        return Err(Error::Report("KDE needs at least two values".into()));
    }
    let raw = bandwidth.unwrap_or_else(|| scott_bandwidth(values));
    let degenerate = !(raw >= KDE_BANDWIDTH_FLOOR);
    let h = if degenerate { KDE_BANDWIDTH_FLOOR } else { raw };
    let (lo, hi) = (-0.1, 1.1);
    let step = (hi - lo) / (KDE_GRID_POINTS - 1) as f64;
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..KDE_GRID_POINTS {
        let x = lo + i as f64 * step;
        if !(0.0..=1.0).contains(&x) {
            continue;
        }
        let y: f64 = values
            .iter()
            .map(|v| (-0.5 * ((x - v) / h).powi(2)).exp())
            .sum::<f64>()
            * norm;
        xs.push(x);
        ys.push(y);
    }
    let mass_in_grid = xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum();
    Ok(KdeCurve {
        xs,
        ys,
        bandwidth: h,
        mass_in_grid,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedBar {
    pub word: String,
    pub own: f64,
    pub other: f64,
}

/// Top-k words of each side, each with the other side's probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopkComparison {
    pub human: Vec<PairedBar>,
    pub model: Vec<PairedBar>,
}

fn top_words(p: &Cpd, k: usize) -> Vec<(&str, f64)> {
    let mut items: Vec<(&str, f64)> = p.iter().collect();
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    items.truncate(k);
    items
}

pub fn topk_comparison(human: &Cpd, model: &Cpd, k: usize) -> TopkComparison {
    let bars = |own: &Cpd, other: &Cpd| {
        top_words(own, k.max(1))
            .into_iter()
            .map(|(w, p)| PairedBar {
                word: w.to_string(),
                own: p,
                other: other.prob(w),
            })
            .collect()
    };
    TopkComparison {
        human: bars(human, model),
        model: bars(model, human),
    }
}

/// Audit record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub created_at: String,
}

/// Markdown table: one ECE row per gold convention, then the expected-TVD
/// row (model against humans, oracle against oracle).
pub fn render_table(agg: &AggregateReport) -> String {
    let mut out = String::from("| | Human | Oracle | Model |\n|---|---|---|---|\n");
    for row in &agg.ece {
        out.push_str(&format!("| ECE ({}) |", row.gold));
        for sys in System::ALL {
            match row.cells.get(&sys) {
                Some(c) => out.push_str(&format!(" {:.3} ± {:.3} |", c.mean, c.std)),
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out.push_str(&format!(
        "| Avg TVD | - | {:.3} | {:.3} |\n",
        agg.expected_tvd.oracle_vs_oracle, agg.expected_tvd.model_vs_human
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn histogram_examples() {
        let h = histogram(&[0.5, 0.5, 0.5], 2).unwrap();
        assert_eq!(h.densities, vec![0.0, 2.0]);
        assert_abs_diff_eq!(h.area(), 1.0, epsilon = 1e-12);

        let grid: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let h = histogram(&grid, 20).unwrap();
        assert!(h.densities.iter().all(|d| (d - 1.0).abs() < 1e-9));
        assert!(histogram(&[], 20).is_err());
        assert!(histogram(&[1.5], 20).is_err());
        assert_eq!(histogram(&[1.0], 4).unwrap().densities[3], 4.0);
    }

    #[test]
    fn kde_single_peak() {
        let c = kde(&[0.4, 0.4], None).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.bandwidth, KDE_BANDWIDTH_FLOOR);
        let (imax, _) = c
            .ys
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert!((c.xs[imax] - 0.4).abs() < 0.003);
        assert!(kde(&[0.4], None).is_err());
    }

    #[test]
    fn kde_integrates_to_one_inside_the_unit_interval() {
        let vals: Vec<f64> = (0..200).map(|i| 0.3 + 0.4 * (i as f64 / 199.0)).collect();
        let c = kde(&vals, None).unwrap();
        assert!((c.mass_in_grid - 1.0).abs() < 0.02);
        assert_eq!(c.xs.len(), c.ys.len());
        assert!(c.xs.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn kde_multiplicity_invariance() {
        let vals = [0.1, 0.35, 0.6, 0.62, 0.9];
        let doubled: Vec<f64> = vals.iter().chain(vals.iter()).copied().collect();
        let a = kde(&vals, Some(0.05)).unwrap();
        let b = kde(&doubled, Some(0.05)).unwrap();
        for (ya, yb) in a.ys.iter().zip(&b.ys) {
            assert_abs_diff_eq!(ya, yb, epsilon = 1e-12);
        }
        // Doubling scales the (n-1)-normalized variance by 2(n-1)/(2n-1).
        let ratio = scott_bandwidth(&doubled) / scott_bandwidth(&vals);
        assert_abs_diff_eq!(ratio, 2f64.powf(-0.2) * (8.0f64 / 9.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn topk_examples() {
        let p = Cpd::from_probs([("a", 0.5), ("b", 0.3), ("c", 0.2)]).unwrap();
        let q = Cpd::from_probs([("b", 0.6), ("d", 0.4)]).unwrap();
        let t = topk_comparison(&p, &q, 2);
        let words: Vec<_> = t.human.iter().map(|b| b.word.as_str()).collect();
        assert_eq!(words, ["a", "b"]);
        assert_eq!(t.human[1].other, 0.6);
        assert_eq!(t.human[0].other, 0.0);

        let same = topk_comparison(&p, &p, 15);
        assert_eq!(same.human, same.model);
        assert_eq!(same.human.len(), 3);
    }
}
