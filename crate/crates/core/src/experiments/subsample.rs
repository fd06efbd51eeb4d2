use std::collections::BTreeMap;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpd::{mle, tvd, Cpd, WordCounts};
use crate::error::{Error, Result};
use crate::report::{histogram, HistogramData};
use crate::sampler::GenerationRecord;
use crate::util::{derive_seed, mean, seeded_rng};

pub const DEFAULT_SIZES: [usize; 4] = [10, 20, 40, 100];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleResult {
    pub subsample_size: usize,
    pub seed: u64,
    pub mse: f64,
    /// Per-context squared TVD differences, in context-id order.
    pub squared_errors: Vec<f64>,
    pub histogram: HistogramData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleReport {
    pub results: Vec<SubsampleResult>,
    /// Contexts evaluated at every size.
    pub context_ids: Vec<String>,
    /// Contexts excluded, with the reason.
    pub excluded: BTreeMap<String, String>,
}

/// Accepted words per context, in sample order.
pub fn accepted_words(records: &[GenerationRecord]) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<(u64, String)>> = BTreeMap::new();
    for r in records {
        if let (false, Some(w)) = (r.rejected, &r.sliced_word) {
            out.entry(r.context_id.clone()).or_default().push((r.sample_index, w.clone()));
        }
    }
    out.into_iter()
        .map(|(c, mut ws)| {
            ws.sort_by_key(|(i, _)| *i);
            (c, ws.into_iter().map(|(_, w)| w).collect())
        })
        .collect()
}

/// MLE over a uniform subsample of `size` words drawn without replacement.
pub fn subsample_cpd(words: &[String], size: usize, seed: u64) -> Result<Cpd> {
    if size == 0 || size > words.len() {
        return Err(Error::Input(format!("cannot draw {size} of {} words", words.len())));
    }
    let idx = sample(&mut seeded_rng(seed), words.len(), size);
    let counts: WordCounts = idx.iter().map(|i| words[i].clone()).collect();
    mle(&counts)
}

pub fn subsample_mse(
    words_by_context: &BTreeMap<String, Vec<String>>,
    oracle: &BTreeMap<String, Cpd>,
    sizes: &[usize],
    seeds: &[u64],
) -> Result<SubsampleReport> {
    let need = sizes.iter().copied().max().ok_or_else(|| Error::Input("no subsample sizes".into()))?;
    let mut excluded = BTreeMap::new();
    let mut full = BTreeMap::new();
    for (c, words) in words_by_context {
        let Some(o) = oracle.get(c) else {
            excluded.insert(c.clone(), "no oracle cpd".to_string());
            continue;
        };
        if words.len() < need {
            excluded.insert(c.clone(), format!("{} accepted records, need {need}", words.len()));
            continue;
        }
        let counts: WordCounts = words.iter().cloned().collect();
        full.insert(c.clone(), (words, o, tvd(&mle(&counts)?, o)));
    }
    for c in oracle.keys().filter(|c| !words_by_context.contains_key(*c)) {
        excluded.insert(c.clone(), "no generations".to_string());
    }
    if full.is_empty() {
        return Err(Error::Input("no context has enough records for every size".into()));
    }
    let grid: Vec<(usize, u64)> = sizes.iter().flat_map(|&s| seeds.iter().map(move |&d| (s, d))).collect();
    let results = grid
        .par_iter()
        .map(|&(size, seed)| {
            let squared_errors = full
                .iter()
                .map(|(c, (words, o, full_tvd))| {
                    let p = subsample_cpd(words, size, derive_seed(seed, c, size as u64))?;
                    Ok((tvd(&p, o) - full_tvd).powi(2))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(SubsampleResult {
                subsample_size: size,
                seed,
                mse: mean(&squared_errors),
                histogram: histogram(&squared_errors, 20)?,
                squared_errors,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SubsampleReport {
        results,
        context_ids: full.into_keys().collect(),
        excluded,
    })
}
