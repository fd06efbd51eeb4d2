use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::cpd::{tvd, Cpd};
use crate::error::{Error, Result};
use crate::metrics::split_oracle;
use crate::report::{histogram, HistogramData};
use crate::util::{derive_seed, mean, seeded_rng, std_dev};

/// Default sweep grid: 0, 10, ..., 100.
pub fn default_ks() -> Vec<u32> {
    (0..=10).map(|i| i * 10).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementResult {
    pub k_percent: u32,
    pub seed: u64,
    pub oracle_sizes: Option<(usize, usize)>,
    pub replaced_context_ids: BTreeSet<String>,
    /// Per-context TVD after replacement, in context-id order.
    pub tvd_values: Vec<f64>,
    pub mean: f64,
    pub histogram: HistogramData,
}

/// Number of contexts replaced at `k` percent.
pub fn replaced_count(k_percent: u32, n_contexts: usize) -> usize {
    (k_percent as f64 / 100.0 * n_contexts as f64).round() as usize
}

/// Replaces a random `k`% of model-vs-oracle TVDs with the oracle-vs-oracle
/// TVD of the same context. For a given seed the replaced sets are nested
/// prefixes of one random permutation, so they grow with `k`.
pub fn improvement_sweep(
    model_tvds: &BTreeMap<String, f64>,
    oracle_tvds: &BTreeMap<String, f64>,
    ks: &[u32],
    seeds: &[u64],
    oracle_sizes: Option<(usize, usize)>,
) -> Result<Vec<ImprovementResult>> {
    if model_tvds.len() != oracle_tvds.len() || model_tvds.keys().zip(oracle_tvds.keys()).any(|(a, b)| a != b) {
        return Err(Error::Input("model and oracle TVDs cover different contexts".into()));
    }
    if model_tvds.is_empty() {
        return Err(Error::Input("no contexts to sweep".into()));
    }
    if let Some(k) = ks.iter().find(|&&k| k > 100) {
        return Err(Error::Input(format!("k = {k} is not a percentage")));
    }
    let ids: Vec<&String> = model_tvds.keys().collect();
    let mut out = Vec::with_capacity(ks.len() * seeds.len());
    for &seed in seeds {
        let mut order = ids.clone();
        order.shuffle(&mut seeded_rng(derive_seed(seed, "improve", 0)));
        for &k in ks {
            let replaced: BTreeSet<String> = order[..replaced_count(k, ids.len())]
                .iter()
                .map(|s| s.to_string())
                .collect();
            let tvd_values: Vec<f64> = ids
                .iter()
                .map(|id| {
                    if replaced.contains(*id) {
                        oracle_tvds[*id]
                    } else {
                        model_tvds[*id]
                    }
                })
                .collect();
            out.push(ImprovementResult {
                k_percent: k,
                seed,
                oracle_sizes,
                replaced_context_ids: replaced,
                mean: mean(&tvd_values),
                histogram: histogram(&tvd_values, 20)?,
                tvd_values,
            });
        }
    }
    Ok(out)
}

/// Per-k aggregate over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub k_percent: u32,
    pub mean: f64,
    pub std_over_seeds: f64,
    pub pooled_histogram: HistogramData,
}

pub fn summarize_sweep(results: &[ImprovementResult]) -> Result<Vec<SweepSummary>> {
    let mut by_k: BTreeMap<u32, Vec<&ImprovementResult>> = BTreeMap::new();
    for r in results {
        by_k.entry(r.k_percent).or_default().push(r);
    }
    by_k.into_iter()
        .map(|(k, rs)| {
            let means: Vec<f64> = rs.iter().map(|r| r.mean).collect();
            let pooled: Vec<f64> = rs.iter().flat_map(|r| r.tvd_values.iter().copied()).collect();
            Ok(SweepSummary {
                k_percent: k,
                mean: mean(&means),
                std_over_seeds: std_dev(&means),
                pooled_histogram: histogram(&pooled, 20)?,
            })
        })
        .collect()
}

/// The grid point whose mean TVD is closest to `target_mean`.
pub fn closest_k(summary: &[SweepSummary], target_mean: f64) -> Option<u32> {
    summary
        .iter()
        .min_by(|a, b| (a.mean - target_mean).abs().total_cmp(&(b.mean - target_mean).abs()))
        .map(|s| s.k_percent)
}

/// Builds per-seed oracle pairs from the human answers and sweeps each.
/// Contexts that cannot supply both halves are skipped and returned.
pub fn improvement_from_dataset(
    dataset: &Dataset,
    model_cpds: &BTreeMap<String, Cpd>,
    oracle_sizes: Option<(usize, usize)>,
    ks: &[u32],
    seeds: &[u64],
) -> Result<(Vec<ImprovementResult>, Vec<String>)> {
    let mut out = Vec::new();
    let mut skipped = BTreeSet::new();
    for &seed in seeds {
        let mut model_tvds = BTreeMap::new();
        let mut oracle_tvds = BTreeMap::new();
        for c in &dataset.contexts {
            let (Some(model), Some(rs)) = (model_cpds.get(&c.context_id), dataset.responses(&c.context_id)) else {
                skipped.insert(c.context_id.clone());
                continue;
            };
            match split_oracle(rs, oracle_sizes, derive_seed(seed, &c.context_id, 0)) {
                Ok(s) => {
                    model_tvds.insert(c.context_id.clone(), tvd(model, &s.oracle_a));
                    oracle_tvds.insert(c.context_id.clone(), tvd(&s.oracle_a, &s.oracle_b));
                }
                Err(_) => {
                    skipped.insert(c.context_id.clone());
                }
            }
        }
        out.extend(improvement_sweep(&model_tvds, &oracle_tvds, ks, &[seed], oracle_sizes)?);
    }
    Ok((out, skipped.into_iter().collect()))
}
