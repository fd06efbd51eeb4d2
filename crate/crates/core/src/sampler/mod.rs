//! Model generations and the distributions estimated from them.
//!
//! Generations come from a live OpenAI-compatible endpoint or a replay
//! cache. Each raw continuation is cut to its first complete word; the
//! Monte Carlo estimate is the relative frequency of those words. The
//! [`biased`] estimator instead renormalizes model log-probabilities over a
//! constructed candidate support.

pub mod biased;
mod cache;
mod collect;
mod endpoint;
mod slice;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cpd::{mle, Cpd, Normalization, WordCounts};
use crate::error::{Error, Result};

pub use biased::{
    biased_estimate, build_candidates, score_candidates, CandidateOrigin, HttpScorer,
    LogprobScorer, ReplayScorer, ScoredCandidate,
};
pub use cache::GenerationCache;
pub use collect::{collect_generations, CollectionConfig, CollectionOutcome};
pub use endpoint::{
    chat_prompt, parse_word_list, EndpointConfig, EndpointError, GenerationEndpoint,
    GenerationRequest, HttpEndpoint, API_KEY_ENV,
};
pub use slice::{first_word, first_word_with, slice_first_word, slice_first_word_with};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    /// Raw continuation of the context text.
    Completion,
    /// One chat request per sample, asking for a single word.
    ChatIndependent,
    /// One chat request asking for a list of words.
    ChatDiverse,
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptMode::Completion => "completion",
            PromptMode::ChatIndependent => "chat_independent",
            PromptMode::ChatDiverse => "chat_diverse",
        })
    }
}

impl FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "completion" => Ok(PromptMode::Completion),
            "chat_independent" => Ok(PromptMode::ChatIndependent),
            "chat_diverse" => Ok(PromptMode::ChatDiverse),
            other => Err(Error::Usage(format!("unknown prompt mode `{other}`"))),
        }
    }
}

/// One model draw for a context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub context_id: String,
    pub model_id: String,
    pub sample_index: u64,
    pub raw_text: String,
    pub sliced_word: Option<String>,
    pub rejected: bool,
    pub temperature: f64,
    pub prompt_mode: PromptMode,
    pub seed: Option<u64>,
    /// Nucleus truncation, when the draw was not ancestral.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
}

impl GenerationRecord {
    pub fn is_consistent(&self) -> bool {
        self.rejected == self.sliced_word.is_none()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RejectionStats {
    pub attempts: u64,
    pub rejections: u64,
    pub rejection_rate: f64,
}

impl RejectionStats {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a GenerationRecord>) -> Self {
        let mut s = RejectionStats::default();
        for r in records {
            s.attempts += 1;
            if r.rejected {
                s.rejections += 1;
            }
        }
        if s.attempts > 0 {
            s.rejection_rate = s.rejections as f64 / s.attempts as f64;
        }
        s
    }
}

/// Relative frequency of sliced words; rejected draws are left out of the
/// denominator.
pub fn mc_estimate<'a>(records: impl IntoIterator<Item = &'a GenerationRecord>) -> Result<Cpd> {
    let counts: WordCounts = records
        .into_iter()
        .filter(|r| !r.rejected)
        .filter_map(|r| r.sliced_word.clone())
        .collect();
    if counts.is_empty() {
        return Err(Error::Estimation("every generation was rejected".into()));
    }
    mle(&counts)
}

/// Re-slices every record's raw text under `mode`, using the strict rule
/// for completions and the lenient one for chat replies.
pub fn reslice(records: &mut [GenerationRecord], mode: Normalization) {
    for r in records {
        let w = match r.prompt_mode {
            PromptMode::Completion => slice_first_word_with(&r.raw_text, mode),
            PromptMode::ChatIndependent | PromptMode::ChatDiverse => first_word_with(&r.raw_text, mode),
        };
        r.rejected = w.is_none();
        r.sliced_word = w;
    }
}

/// Groups records by context and estimates one distribution per context.
/// Contexts whose draws were all rejected are returned separately.
pub fn estimate_all(records: &[GenerationRecord]) -> (BTreeMap<String, Cpd>, Vec<String>) {
    let mut grouped: BTreeMap<&str, Vec<&GenerationRecord>> = BTreeMap::new();
    for r in records {
        grouped.entry(r.context_id.as_str()).or_default().push(r);
    }
    let mut cpds = BTreeMap::new();
    let mut failed = Vec::new();
    for (id, rs) in grouped {
        match mc_estimate(rs) {
            Ok(p) => {
                cpds.insert(id.to_string(), p);
            }
            Err(_) => failed.push(id.to_string()),
        }
    }
    (cpds, failed)
}

/// Reads generations JSONL.
pub fn read_generations(text: &str) -> Result<Vec<GenerationRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: GenerationRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !rec.is_consistent() {
            return Err(Error::Integrity(format!(
                "line {}: rejected flag disagrees with sliced word",
                i + 1
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_generations(records: &[GenerationRecord]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}
