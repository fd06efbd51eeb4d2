use std::collections::BTreeMap;

use serde::Deserialize;

use crate::corpus::{Context, Dataset, ResponseSet};
use crate::cpd::{mle, Cpd, WordCounts};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalConfig, Evaluation};
use crate::sampler::GenerationRecord;

use super::bpe::{bpe_first_token, BpeVocab};

/// First token of a word as it appears mid-sentence.
pub fn word_token(word: &str, vocab: &BpeVocab) -> Result<String> {
    bpe_first_token(&format!(" {word}"), vocab)
}

/// First token of a raw generation. Chat replies carry no leading space, so
/// one is added to keep them in the same token space as completions.
pub fn generation_token(raw: &str, vocab: &BpeVocab) -> Result<Option<String>> {
    if raw.trim().is_empty() {
        return Ok(None);
    }
    let text = if raw.starts_with(char::is_whitespace) {
        raw.to_string()
    } else {
        format!(" {raw}")
    };
    bpe_first_token(&text, vocab).map(Some)
}

/// Rewrites every human answer and corpus word as its first token; answers
/// sharing a first token are merged.
pub fn tokenize_dataset(dataset: &Dataset, vocab: &BpeVocab) -> Result<Dataset> {
    let contexts = dataset
        .contexts
        .iter()
        .map(|c| {
            Ok(Context {
                corpus_word: word_token(&c.corpus_word, vocab)?,
                ..c.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let response_sets = dataset
        .response_sets
        .iter()
        .map(|(id, rs)| {
            let mut counts = WordCounts::new();
            for r in &rs.responses {
                counts.add(word_token(&r.word, vocab)?, r.count);
            }
            Ok((id.clone(), ResponseSet::from_counts(id.clone(), &counts)))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    let mut provenance = dataset.provenance.clone();
    provenance.options.insert("space".into(), "first_bpe_token".into());
    Ok(Dataset {
        contexts,
        response_sets,
        provenance,
    })
}

/// Model token cpds from the first token of each non-empty raw generation.
pub fn token_cpds_from_generations(
    records: &[GenerationRecord],
    vocab: &BpeVocab,
) -> Result<BTreeMap<String, Cpd>> {
    let mut counts: BTreeMap<String, WordCounts> = BTreeMap::new();
    for r in records {
        if let Some(t) = generation_token(&r.raw_text, vocab)? {
            counts.entry(r.context_id.clone()).or_default().add(t, 1);
        }
    }
    counts.into_iter().map(|(c, wc)| Ok((c, mle(&wc)?))).collect()
}

#[derive(Deserialize)]
struct LogitRow {
    context_id: String,
    token: String,
    logprob: f64,
}

/// Model token cpds from next-token log-probabilities, one JSON object
/// `{"context_id", "token", "logprob"}` per line, renormalized per context.
pub fn token_cpds_from_logits(text: &str) -> Result<BTreeMap<String, Cpd>> {
    let mut rows: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: LogitRow = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if r.logprob.is_nan() || r.logprob > 1e-9 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("invalid logprob {}", r.logprob),
            });
        }
        rows.entry(r.context_id).or_default().push((r.token, r.logprob));
    }
    rows.into_iter()
        .map(|(c, toks)| {
            let top = toks.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
            Ok((c, Cpd::from_weights(toks.into_iter().map(|(t, lp)| (t, (lp - top).exp())))?))
        })
        .collect()
}

/// Runs the standard evaluation in first-token space.
pub fn token_level_eval(
    dataset: &Dataset,
    model_token_cpds: &BTreeMap<String, Cpd>,
    vocab: &BpeVocab,
    cfg: &EvalConfig,
) -> Result<Evaluation> {
    evaluate(&tokenize_dataset(dataset, vocab)?, model_token_cpds, cfg)
}
