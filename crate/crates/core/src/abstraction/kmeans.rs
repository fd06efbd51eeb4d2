use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{derive_seed, seeded_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KmeansParams {
    pub n_init: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for KmeansParams {
    fn default() -> Self {
        KmeansParams {
            n_init: 20,
            max_iter: 400,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansFit {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub sse: f64,
    /// SSE after each assignment step of the winning restart.
    pub sse_history: Vec<f64>,
    /// Empty clusters re-seeded at the farthest point in the winning restart.
    pub reseeds: usize,
    pub restart: usize,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = d.iter().rposition(|x| *x > 0.0).unwrap_or(0);
            for (i, x) in d.iter().enumerate() {
                if u < *x {
                    pick = i;
                    break;
                }
                u -= x;
            }
            pick
        } else {
            rng.gen_range(0..points.len())
        };
        centroids.push(points[idx].clone());
        for (di, p) in d.iter_mut().zip(points) {
            *di = di.min(dist2(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], k: usize, max_iter: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<usize>, Vec<f64>, usize) {
    let dim = points[0].len();
    let mut centroids = plus_plus(points, k, rng);
    let mut labels = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let mut reseeds = 0;
    for _ in 0..max_iter {
        let mut changed = false;
        let mut sse = 0.0;
        for (l, p) in labels.iter_mut().zip(points) {
            let (c, d) = nearest(p, &centroids);
            changed |= *l != c;
            *l = c;
            sse += d;
        }
        history.push(sse);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (l, p) in labels.iter().zip(points) {
            sizes[*l] += 1;
            for (s, x) in sums[*l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
            }
        }
        for c in 0..k {
            if sizes[c] == 0 {
                // Move the empty centroid onto the point worst served now.
                let far = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, nearest(p, &centroids).1))
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map_or(0, |(i, _)| i);
                centroids[c] = points[far].clone();
                reseeds += 1;
            }
        }
    }
    (centroids, labels, history, reseeds)
}

/// Best-of-`n_init` k-means with k-means++ seeding. Restart `r` draws from
/// a seed derived from `(seed, r)`, so results do not depend on thread
/// scheduling.
pub fn kmeans(points: &[Vec<f64>], k: usize, params: &KmeansParams) -> Result<KmeansFit> {
    if k == 0 || k > points.len() {
        return Err(Error::Input(format!("k = {k} with {} points", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Input("points differ in dimension".into()));
    }
    let fits: Vec<KmeansFit> = (0..params.n_init.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = seeded_rng(derive_seed(params.seed, "kmeans", r as u64));
            let (centroids, labels, sse_history, reseeds) = lloyd(points, k, params.max_iter.max(1), &mut rng);
            let sse = points.iter().zip(&labels).map(|(p, l)| dist2(p, &centroids[*l])).sum();
            KmeansFit {
                k,
                centroids,
                labels,
                sse,
                sse_history,
                reseeds,
                restart: r,
            }
        })
        .collect();
    Ok(fits
        .into_iter()
        .min_by(|a, b| a.sse.total_cmp(&b.sse).then(a.restart.cmp(&b.restart)))
        .expect("at least one restart"))
}

/// `range(2, k_max, k_max // 3)`.
pub fn k_grid(k_max: usize) -> Vec<usize> {
    let step = k_max / 3;
    if step == 0 {
        return Vec::new();
    }
    (2..k_max).step_by(step).collect()
}

/// Index of the knee: the point farthest from the chord joining the first
/// and last points, in min-max normalized coordinates. Ties go to the
/// earliest point.
pub fn knee_index(xs: &[f64], ys: &[f64]) -> usize {
    if xs.len() < 3 {
        return 0;
    }
    let norm = |v: &[f64]| -> Vec<f64> {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        v.iter().map(|x| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 }).collect()
    };
    let (x, y) = (norm(xs), norm(ys));
    let n = x.len() - 1;
    let (dx, dy) = (x[n] - x[0], y[n] - y[0]);
    let len = (dx * dx + dy * dy).sqrt();
    if len == 0.0 {
        return 0;
    }
    let mut best = (0, 0.0);
    for i in 1..n {
        let d = (dy * (x[i] - x[0]) - dx * (y[i] - y[0])).abs() / len;
        if d > best.1 + 1e-12 {
            best = (i, d);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k: usize,
    pub grid: Vec<usize>,
    pub sse: Vec<f64>,
}

/// Picks k at the knee of the SSE curve over [`k_grid`]. With fewer than
/// two grid points the answer is 2 (or the point count, if smaller).
pub fn select_k(points: &[Vec<f64>], params: &KmeansParams) -> Result<KSelection> {
    let grid = k_grid(points.len());
    if grid.len() < 2 {
        return Ok(KSelection {
            k: points.len().min(2),
            grid,
            sse: Vec::new(),
        });
    }
    let sse = grid
        .iter()
        .map(|&k| kmeans(points, k, params).map(|f| f.sse))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = grid.iter().map(|&k| k as f64).collect();
    Ok(KSelection {
        k: grid[knee_index(&xs, &sse)],
        grid,
        sse,
    })
}
