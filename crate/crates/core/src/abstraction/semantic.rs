use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cpd::{tvd, Cpd};
use crate::error::Result;

use super::embeddings::{EmbeddingTable, Scaler};
use super::kmeans::{kmeans, select_k, KmeansParams};

pub const OOV_GROUP: &str = "oov";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SemanticParams {
    /// Fixed number of clusters; chosen by the SSE knee when absent.
    pub k: Option<usize>,
    pub kmeans: KmeansParams,
}

/// A clustering of one context's joint word set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignment: BTreeMap<String, usize>,
    pub oov_group: BTreeSet<String>,
    pub sse: f64,
    pub scaler: Option<Scaler>,
    /// No word had an embedding.
    pub degenerate: bool,
}

impl Clustering {
    /// Group label of a word. Words outside the fitted set are placed at
    /// the nearest centroid when embedded, otherwise with the OOV group.
    pub fn group_of(&self, word: &str, table: &EmbeddingTable) -> String {
        if let Some(c) = self.assignment.get(word) {
            return format!("c{c}");
        }
        match (table.get(word), &self.scaler) {
            (Some(v), Some(s)) if !self.centroids.is_empty() => {
                let x = s.transform(v);
                let c = self
                    .centroids
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (i, c.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>()))
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                    .map_or(0, |(i, _)| i);
                format!("c{c}")
            }
            _ => OOV_GROUP.to_string(),
        }
    }

    pub fn repartition(&self, p: &Cpd, table: &EmbeddingTable) -> Cpd {
        p.repartition(|w| self.group_of(w, table))
    }
}

/// Clusters the embedded members of `words` after standardizing them
/// together; the rest form the OOV group.
pub fn cluster_words(words: &BTreeSet<String>, table: &EmbeddingTable, params: &SemanticParams) -> Result<Clustering> {
    let (embedded, oov): (Vec<&String>, Vec<&String>) = words.iter().partition(|w| table.get(w).is_some());
    let oov_group: BTreeSet<String> = oov.into_iter().cloned().collect();
    if embedded.is_empty() {
        return Ok(Clustering {
            k: 0,
            centroids: Vec::new(),
            assignment: BTreeMap::new(),
            oov_group,
            sse: 0.0,
            scaler: None,
            degenerate: true,
        });
    }
    let raw: Vec<&[f64]> = embedded.iter().map(|w| table.get(w).expect("embedded")).collect();
    let scaler = Scaler::fit(&raw).expect("non-empty");
    let points: Vec<Vec<f64>> = raw.iter().map(|v| scaler.transform(v)).collect();
    let k = match params.k {
        Some(k) => k.clamp(1, points.len()),
        None => select_k(&points, &params.kmeans)?.k,
    };
    let fit = kmeans(&points, k, &params.kmeans)?;
    Ok(Clustering {
        k,
        assignment: embedded.into_iter().cloned().zip(fit.labels).collect(),
        centroids: fit.centroids,
        oov_group,
        sse: fit.sse,
        scaler: Some(scaler),
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticTvd {
    pub tvd: f64,
    pub clustering: Clustering,
}

/// TVD between the cluster-level distributions of `p` and `q`, clustering
/// the union of their supports.
pub fn tvd_sem(p: &Cpd, q: &Cpd, table: &EmbeddingTable, params: &SemanticParams) -> Result<SemanticTvd> {
    let words: BTreeSet<String> = p.words().chain(q.words()).map(str::to_string).collect();
    let clustering = cluster_words(&words, table, params)?;
    Ok(SemanticTvd {
        tvd: tvd_with(&clustering, p, q, table),
        clustering,
    })
}

/// TVD under an existing clustering, e.g. for oracle pairs.
pub fn tvd_with(clustering: &Clustering, p: &Cpd, q: &Cpd, table: &EmbeddingTable) -> f64 {
    tvd(&clustering.repartition(p, table), &clustering.repartition(q, table))
}
