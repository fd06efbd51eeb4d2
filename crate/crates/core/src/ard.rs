//! Bayesian linear regression with automatic relevance determination.
//!
//! Each weight gets its own Gaussian prior precision; evidence maximization
//! drives the precision of irrelevant features to infinity, which prunes
//! them to exactly zero.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::abstraction::UniversalTag;
use crate::error::{Error, Result};
use crate::metrics::ContextReport;

pub const NUMERIC_FEATURES: [&str; 4] = ["human_entropy", "model_entropy", "tvd_between_oracles", "context_length"];

/// Names of every column: the numeric predictors, then one indicator per tag.
pub fn feature_names() -> Vec<String> {
    NUMERIC_FEATURES
        .iter()
        .map(|s| s.to_string())
        .chain(UniversalTag::ALL.iter().map(|t| format!("tag_{t}")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub context_id: String,
    pub human_entropy: f64,
    pub model_entropy: f64,
    pub tvd_between_oracles: f64,
    pub context_length: f64,
    pub last_word_tag: UniversalTag,
    pub target: f64,
}

impl FeatureRow {
    fn numeric(&self) -> [f64; 4] {
        [self.human_entropy, self.model_entropy, self.tvd_between_oracles, self.context_length]
    }
}

/// Design matrix with standardized numeric columns and raw indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub names: Vec<String>,
    pub rows: Vec<FeatureRow>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    /// Mean and standard deviation used per numeric column.
    pub numeric_means: Vec<f64>,
    pub numeric_stds: Vec<f64>,
    /// Numeric columns with no spread; zeroed in `x`.
    pub constant_features: Vec<String>,
    /// Contexts dropped, with the reason.
    pub dropped: Vec<(String, String)>,
}

impl FeatureSet {
    /// CSV with a header of feature names plus `context_id` and `target`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["context_id".to_string()];
        header.extend(self.names.iter().cloned());
        header.push("target".into());
        w.write_record(&header)?;
        for ((row, x), y) in self.rows.iter().zip(&self.x).zip(&self.y) {
            let mut rec = vec![row.context_id.clone()];
            rec.extend(x.iter().map(|v| v.to_string()));
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Assembles one row per context report that has a last-word tag.
pub fn build_features(reports: &[ContextReport], tags: &BTreeMap<String, UniversalTag>) -> Result<FeatureSet> {
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    for r in reports {
        let Some(tag) = tags.get(&r.context_id) else {
            dropped.push((r.context_id.clone(), "no last-word tag".to_string()));
            continue;
        };
        let row = FeatureRow {
            context_id: r.context_id.clone(),
            human_entropy: r.entropy_human,
            model_entropy: r.entropy_model,
            tvd_between_oracles: r.tvd_oracle_oracle,
            context_length: r.context_length_words as f64,
            last_word_tag: *tag,
            target: r.tvd_model_oracle,
        };
        if row.numeric().iter().chain([&row.target]).any(|v| !v.is_finite()) {
            dropped.push((r.context_id.clone(), "non-finite predictor".to_string()));
            continue;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Input("no complete feature rows".into()));
    }
    let n = rows.len() as f64;
    let mut means = vec![0.0; 4];
    let mut stds = vec![0.0; 4];
    let mut constant = Vec::new();
    for j in 0..4 {
        let col: Vec<f64> = rows.iter().map(|r| r.numeric()[j]).collect();
        let m = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        means[j] = m;
        stds[j] = var.sqrt();
        if !(stds[j] > 1e-12 * m.abs().max(1.0)) {
            constant.push(NUMERIC_FEATURES[j].to_string());
            stds[j] = 0.0;
        }
    }
    let x = rows
        .iter()
        .map(|r| {
            let num = r.numeric();
            let mut v: Vec<f64> = (0..4)
                .map(|j| if stds[j] > 0.0 { (num[j] - means[j]) / stds[j] } else { 0.0 })
                .collect();
            v.extend(UniversalTag::ALL.iter().map(|t| if *t == r.last_word_tag { 1.0 } else { 0.0 }));
            v
        })
        .collect();
    Ok(FeatureSet {
        names: feature_names(),
        y: rows.iter().map(|r| r.target).collect(),
        rows,
        x,
        numeric_means: means,
        numeric_stds: stds,
        constant_features: constant,
        dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArdConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub interval_level: f64,
    /// Precision above which a feature is pruned; `None` disables pruning.
    pub prune_threshold: Option<f64>,
}

impl Default for ArdConfig {
    fn default() -> Self {
        ArdConfig {
            max_iters: 500,
            tol: 1e-6,
            interval_level: 0.95,
            prune_threshold: Some(1e4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArdFit {
    pub weights: Vec<f64>,
    pub weight_variances: Vec<f64>,
    pub credible_intervals: Vec<(f64, f64)>,
    pub pruned: Vec<bool>,
    /// Final prior precision per feature; infinite once pruned.
    #[serde(skip)]
    pub precisions: Vec<f64>,
    pub noise_precision: f64,
    pub intercept: f64,
    pub iterations_run: usize,
    pub converged: bool,
}

/// Caps precisions when pruning is off, so they stay finite.
const ALPHA_CAP: f64 = 1e12;

struct Posterior {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

fn posterior(xa: &DMatrix<f64>, y: &DVector<f64>, alpha: &[f64], beta: f64, iteration: usize) -> Result<Posterior> {
    let mut a = xa.transpose() * xa * beta;
    for (i, al) in alpha.iter().enumerate() {
        a[(i, i)] += al;
    }
    let chol = a.cholesky().ok_or_else(|| Error::Numerical {
        iteration,
        message: "posterior precision is not positive definite".into(),
    })?;
    let cov = chol.inverse();
    let mean = &cov * (xa.transpose() * y) * beta;
    Ok(Posterior { mean, cov })
}

fn columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), idx.len(), |r, c| x[(r, idx[c])])
}

/// Fits the model on rows `x` (one vector per observation) and targets `y`.
/// Columns and target are centered, which is equivalent to fitting an
/// unpenalized intercept.
pub fn fit_ard(x: &[Vec<f64>], y: &[f64], cfg: &ArdConfig) -> Result<ArdFit> {
    let n = x.len();
    let d = x.first().map_or(0, |r| r.len());
    if n < 2 || d == 0 || y.len() != n || x.iter().any(|r| r.len() != d) {
        return Err(Error::Input(format!("ARD needs >= 2 rows and >= 1 feature (got {n} x {d}, {} targets)", y.len())));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Numerical { iteration: 0, message: "non-finite input".into() });
    }
    if !(0.0..1.0).contains(&cfg.interval_level) {
        return Err(Error::Input(format!("interval level {} not in (0, 1)", cfg.interval_level)));
    }
    let x_mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let xm = DMatrix::from_fn(n, d, |i, j| x[i][j] - x_mean[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let y_var = yc.norm_squared() / n as f64;

    let mut alpha = vec![f64::INFINITY; d];
    let mut active: Vec<usize> = (0..d).filter(|&j| xm.column(j).norm_squared() > 0.0).collect();
    let finish = |alpha: Vec<f64>, active: &[usize], post: Option<&Posterior>, beta: f64, it: usize, conv: bool| {
        let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + cfg.interval_level / 2.0);
        let mut weights = vec![0.0; d];
        let mut vars = vec![0.0; d];
        if let Some(p) = post {
            for (k, &j) in active.iter().enumerate() {
                weights[j] = p.mean[k];
                vars[j] = p.cov[(k, k)].max(0.0);
            }
        }
        let intercept = y_mean - x_mean.iter().zip(&weights).map(|(m, w)| m * w).sum::<f64>();
        ArdFit {
            credible_intervals: weights.iter().zip(&vars).map(|(w, v)| (w - z * v.sqrt(), w + z * v.sqrt())).collect(),
            pruned: (0..d).map(|j| !active.contains(&j)).collect(),
            weights,
            weight_variances: vars,
            precisions: alpha,
            noise_precision: beta,
            intercept,
            iterations_run: it,
            converged: conv,
        }
    };
    if y_var <= f64::EPSILON * y_mean.abs().max(1.0) * f64::EPSILON || active.is_empty() {
        // Nothing to explain: every weight is zero.
        let beta = if y_var > 0.0 { 1.0 / y_var } else { f64::MAX };
        return Ok(finish(vec![f64::INFINITY; d], &[], None, beta, 0, true));
    }
    for &j in &active {
        alpha[j] = 1.0;
    }
    let mut beta = 1.0 / y_var;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iters {
        iterations = it;
        let xa = columns(&xm, &active);
        let a_act: Vec<f64> = active.iter().map(|&j| alpha[j]).collect();
        let post = posterior(&xa, &yc, &a_act, beta, it)?;
        let mut gamma_sum = 0.0;
        let mut max_change: f64 = 0.0;
        let mut next = Vec::with_capacity(active.len());
        for (k, &j) in active.iter().enumerate() {
            let gamma = (1.0 - alpha[j] * post.cov[(k, k)]).clamp(0.0, 1.0);
            gamma_sum += gamma;
            let mu2 = post.mean[k].powi(2);
            let mut a_new = if mu2 > 0.0 { gamma / mu2 } else { f64::INFINITY };
            if cfg.prune_threshold.is_none() {
                a_new = a_new.clamp(1.0 / ALPHA_CAP, ALPHA_CAP);
            }
            if a_new.is_nan() {
                return Err(Error::Numerical { iteration: it, message: format!("precision of feature {j} is NaN") });
            }
            max_change = max_change.max((a_new.max(f64::MIN_POSITIVE).ln() - alpha[j].ln()).abs());
            next.push((j, a_new));
        }
        let resid = (&yc - &xa * &post.mean).norm_squared();
        let dof = (n as f64 - gamma_sum).max(f64::EPSILON);
        beta = if resid > 0.0 { dof / resid } else { f64::MAX };
        if !beta.is_finite() {
            return Err(Error::Numerical { iteration: it, message: "noise precision diverged".into() });
        }
        let before = active.len();
        for (j, a) in next {
            alpha[j] = a;
        }
        if let Some(th) = cfg.prune_threshold {
            active.retain(|&j| alpha[j] <= th);
            for j in 0..d {
                if !active.contains(&j) {
                    alpha[j] = f64::INFINITY;
                }
            }
        }
        if active.is_empty() {
            converged = true;
            break;
        }
        if active.len() == before && max_change < cfg.tol {
            converged = true;
            break;
        }
    }
    let post = if active.is_empty() {
        None
    } else {
        let a_act: Vec<f64> = active.iter().map(|&j| alpha[j]).collect();
        Some(posterior(&columns(&xm, &active), &yc, &a_act, beta, iterations)?)
    };
    if let Some(p) = &post {
        if p.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical { iteration: iterations, message: "non-finite posterior mean".into() });
        }
    }
    Ok(finish(alpha, &active, post.as_ref(), beta, iterations, converged))
}

/// Coefficients for the numeric columns in their original units.
pub fn raw_unit_weights(fit: &ArdFit, features: &FeatureSet) -> Vec<f64> {
    fit.weights
        .iter()
        .enumerate()
        .map(|(j, w)| match features.numeric_stds.get(j) {
            Some(s) if *s > 0.0 => w / s,
            Some(_) => 0.0,
            None => *w,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    // Box-Muller, so the tests need no extra distribution crate.
    fn normal<R: Rng>(rng: &mut R) -> f64 {
        let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    fn synthetic(n: usize, sigma: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = crate::util::seeded_rng(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![normal(&mut rng), normal(&mut rng)]).collect();
        let y = x.iter().map(|r| 2.0 * r[0] + sigma * normal(&mut rng)).collect();
        (x, y)
    }

    #[test]
    fn recovers_signal_and_prunes_noise() {
        let (x, y) = synthetic(500, 0.01, 1);
        let f = fit_ard(&x, &y, &ArdConfig::default()).unwrap();
        assert!((1.9..=2.1).contains(&f.weights[0]), "{:?}", f.weights);
        assert_eq!(f.weights[1], 0.0);
        assert!(f.pruned[1] && !f.pruned[0]);
        assert!(f.converged);
        let (lo, hi) = f.credible_intervals[0];
        assert!(lo <= f.weights[0] && f.weights[0] <= hi);
    }

    #[test]
    fn constant_target_gives_zero_weights() {
        let (x, _) = synthetic(50, 0.1, 2);
        let f = fit_ard(&x, &vec![0.3; 50], &ArdConfig::default()).unwrap();
        assert!(f.weights.iter().all(|w| *w == 0.0));
        assert!((f.intercept - 0.3).abs() < 1e-12);
    }

    #[test]
    fn matches_ridge_without_pruning() {
        let (x, y) = synthetic(100, 0.5, 3);
        let x1: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0]]).collect();
        let cfg = ArdConfig { prune_threshold: None, ..Default::default() };
        let f = fit_ard(&x1, &y, &cfg).unwrap();
        let (xm, ym) = (x1.iter().map(|r| r[0]).sum::<f64>() / 100.0, y.iter().sum::<f64>() / 100.0);
        let sxy: f64 = x1.iter().zip(&y).map(|(r, v)| (r[0] - xm) * (v - ym)).sum();
        let sxx: f64 = x1.iter().map(|r| (r[0] - xm).powi(2)).sum();
        let ridge = f.noise_precision * sxy / (f.noise_precision * sxx + f.precisions[0]);
        assert!((f.weights[0] - ridge).abs() < 1e-8);
    }

    #[test]
    fn deterministic_and_permutation_invariant() {
        let (x, y) = synthetic(200, 0.3, 4);
        let a = fit_ard(&x, &y, &ArdConfig::default()).unwrap();
        assert_eq!(a, fit_ard(&x, &y, &ArdConfig::default()).unwrap());
        let mut idx: Vec<usize> = (0..200).collect();
        idx.reverse();
        idx.rotate_left(17);
        let xp: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
        let yp: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let b = fit_ard(&xp, &yp, &ArdConfig::default()).unwrap();
        assert_eq!(a.pruned, b.pruned);
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert!((wa - wb).abs() < 1e-9);
        }
    }

    #[test]
    fn input_errors() {
        assert!(fit_ard(&[vec![1.0]], &[1.0], &ArdConfig::default()).is_err());
        assert!(fit_ard(&[vec![1.0], vec![f64::NAN]], &[1.0, 2.0], &ArdConfig::default()).is_err());
    }

    fn report(id: &str, he: f64, len: usize, target: f64) -> ContextReport {
        serde_json::from_value(serde_json::json!({
            "context_id": id, "tvd_model_human": 0.5, "tvd_oracle_oracle": 0.3 + he / 10.0,
            "tvd_model_oracle": target, "tvd_oracle_human": 0.2, "entropy_human": he,
            "entropy_model": 1.0 + he, "context_length_words": len, "model_mode": "x",
            "model_confidence": 0.5,
            "gold": {"original": "a", "human_majority": "a", "oracle_majority": "a"},
            "correct": {"original": true, "human_majority": true, "oracle_majority": true}
        }))
        .unwrap()
    }

    #[test]
    fn features_standardized_and_tagged() {
        let reports: Vec<ContextReport> = (0..10).map(|i| report(&format!("c{i}"), i as f64 * 0.3, 7, 0.4)).collect();
        let mut tags: BTreeMap<String, UniversalTag> =
            (0..9).map(|i| (format!("c{i}"), UniversalTag::Noun)).collect();
        tags.insert("c0".into(), UniversalTag::Punct);
        let f = build_features(&reports, &tags).unwrap();
        assert_eq!(f.rows.len(), 9);
        assert_eq!(f.dropped, vec![("c9".to_string(), "no last-word tag".to_string())]);
        assert_eq!(f.constant_features, vec!["context_length"]);
        let col: Vec<f64> = f.x.iter().map(|r| r[0]).collect();
        let m = col.iter().sum::<f64>() / 9.0;
        let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / 8.0;
        assert!(m.abs() < 1e-9 && (v - 1.0).abs() < 1e-9);
        let punct = 4 + UniversalTag::ALL.iter().position(|t| *t == UniversalTag::Punct).unwrap();
        assert_eq!(f.x[0][punct], 1.0);
        assert!(f.x.iter().all(|r| r[4..].iter().sum::<f64>() == 1.0));
        assert!(f.x.iter().all(|r| r[3] == 0.0));
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("context_id,human_entropy,"));
    }
}
