//! Candidate-support estimator built from model log-probabilities.
//!
//! The support is the union of sampled words, the greedy word, the corpus
//! word and every human answer. Each candidate's probability is its joint
//! log-probability given the context, renormalized over the support with the
//! log-sum-exp trick. Unlike the Monte Carlo estimate this always assigns
//! positive mass to every human answer.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::endpoint::{post_json, EndpointConfig, EndpointError};
use crate::corpus::Context;
use crate::cpd::{normalize_word, Cpd};
use crate::error::{Error, Result};

/// Log-probabilities above zero by more than this are rejected.
pub const LOGPROB_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateOrigin {
    UnbiasedSample,
    NucleusSample,
    Greedy,
    CorpusWord,
    HumanWord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub word: String,
    /// log f(c, w) - log f(c).
    pub log_joint: f64,
    pub origin: CandidateOrigin,
}

/// Deduplicated candidate support; a word keeps the first origin it was
/// seen under, in the order of the arguments.
pub fn build_candidates<'a>(
    unbiased: impl IntoIterator<Item = &'a str>,
    nucleus: impl IntoIterator<Item = &'a str>,
    greedy: Option<&str>,
    corpus_word: &str,
    human_words: impl IntoIterator<Item = &'a str>,
) -> Vec<(String, CandidateOrigin)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut push = |w: &str, origin| {
        if let Some(w) = normalize_word(w) {
            if seen.insert(w.clone()) {
                out.push((w, origin));
            }
        }
    };
    for w in unbiased {
        push(w, CandidateOrigin::UnbiasedSample);
    }
    for w in nucleus {
        push(w, CandidateOrigin::NucleusSample);
    }
    if let Some(w) = greedy {
        push(w, CandidateOrigin::Greedy);
    }
    push(corpus_word, CandidateOrigin::CorpusWord);
    for w in human_words {
        push(w, CandidateOrigin::HumanWord);
    }
    out
}

/// Source of `log f(c, w) - log f(c)` for a word after a context.
pub trait LogprobScorer: Sync {
    fn log_joint(&self, context: &Context, word: &str) -> Result<Option<f64>>;
}

/// Scores from a JSONL file of `{"context_id", "word", "log_joint"}` rows.
#[derive(Debug, Clone, Default)]
pub struct ReplayScorer {
    scores: HashMap<(String, String), f64>,
}

#[derive(Deserialize)]
struct ReplayRow {
    context_id: String,
    word: String,
    log_joint: f64,
}

impl ReplayScorer {
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut scores = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: ReplayRow = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let word = normalize_word(&row.word).unwrap_or(row.word);
            scores.insert((row.context_id, word), row.log_joint);
        }
        Ok(ReplayScorer { scores })
    }

    pub fn insert(&mut self, context_id: &str, word: &str, log_joint: f64) {
        self.scores
            .insert((context_id.to_string(), word.to_string()), log_joint);
    }
}

impl LogprobScorer for ReplayScorer {
    fn log_joint(&self, context: &Context, word: &str) -> Result<Option<f64>> {
        Ok(self
            .scores
            .get(&(context.context_id.clone(), word.to_string()))
            .copied())
    }
}

/// Sums the log-probabilities of the tokens that start at or after
/// `word_start` (a byte offset into the echoed prompt).
pub fn word_logprob(text_offsets: &[usize], token_logprobs: &[Option<f64>], word_start: usize) -> Option<f64> {
    let mut sum = 0.0;
    let mut any = false;
    for (off, lp) in text_offsets.iter().zip(token_logprobs) {
        if *off >= word_start {
            sum += (*lp)?;
            any = true;
        }
    }
    any.then_some(sum)
}

/// Scores words through an OpenAI-compatible completions endpoint by
/// echoing `context + " " + word` and summing the word's token log-probs.
pub struct HttpScorer {
    config: EndpointConfig,
    agent: ureq::Agent,
}

impl HttpScorer {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpScorer { config, agent }
    }
}

impl LogprobScorer for HttpScorer {
    fn log_joint(&self, context: &Context, word: &str) -> Result<Option<f64>> {
        let prompt = format!("{} {}", context.context_text, word);
        let body = json!({
            "model": self.config.model,
            "prompt": prompt,
            "max_tokens": 0,
            "echo": true,
            "logprobs": 0,
        });
        let v = post_json(&self.agent, &self.config, "completions", &body).map_err(|e| match e {
            EndpointError::Transient(m) | EndpointError::Fatal(m) => Error::Collection {
                context_id: context.context_id.clone(),
                message: m,
            },
        })?;
        let lp = v.pointer("/choices/0/logprobs").cloned().unwrap_or(Value::Null);
        let offsets: Vec<usize> = lp
            .get("text_offset")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_u64).map(|x| x as usize).collect())
            .unwrap_or_default();
        let logprobs: Vec<Option<f64>> = lp
            .get("token_logprobs")
            .and_then(Value::as_array)
            .map(|a| a.iter().map(Value::as_f64).collect())
            .unwrap_or_default();
        Ok(word_logprob(&offsets, &logprobs, context.context_text.len()))
    }
}

/// Attaches a log-joint score to every candidate.
pub fn score_candidates(
    context: &Context,
    words: &[(String, CandidateOrigin)],
    scorer: &dyn LogprobScorer,
) -> Result<Vec<ScoredCandidate>> {
    let mut out = Vec::with_capacity(words.len());
    let mut missing = Vec::new();
    for (word, origin) in words {
        match scorer.log_joint(context, word)? {
            Some(lj) if !lj.is_finite() => {
                return Err(Error::Scoring(format!("non-finite score for `{word}`")))
            }
            Some(lj) if lj > LOGPROB_TOLERANCE => {
                return Err(Error::Scoring(format!("log-probability {lj} > 0 for `{word}`")))
            }
            Some(lj) => out.push(ScoredCandidate {
                word: word.clone(),
                log_joint: lj.min(0.0),
                origin: *origin,
            }),
            None => missing.push(word.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingScore {
            context_id: context.context_id.clone(),
            words: missing,
        });
    }
    Ok(out)
}

/// Renormalizes candidate scores into a distribution whose support is
/// exactly the candidate set.
pub fn biased_estimate(candidates: &[ScoredCandidate]) -> Result<Cpd> {
    if candidates.is_empty() {
        return Err(Error::Input("no candidates".into()));
    }
    if let Some(c) = candidates.iter().find(|c| !c.log_joint.is_finite()) {
        return Err(Error::Scoring(format!("non-finite score for `{}`", c.word)));
    }
    let max = candidates
        .iter()
        .map(|c| c.log_joint)
        .fold(f64::NEG_INFINITY, f64::max);
    let lse = max
        + candidates
            .iter()
            .map(|c| (c.log_joint - max).exp())
            .sum::<f64>()
            .ln();
    // Floor at the smallest positive double so far-tail candidates stay in
    // the support instead of underflowing to zero.
    let weights = candidates
        .iter()
        .map(|c| (c.word.clone(), (c.log_joint - lse).exp().max(f64::MIN_POSITIVE)));
    Cpd::from_weights(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ctx() -> Context {
        Context {
            context_id: "c1".into(),
            passage_id: "1".into(),
            word_number: 3,
            context_text: "There is".into(),
            corpus_word: "a".into(),
        }
    }

    fn scored(word: &str, lj: f64) -> ScoredCandidate {
        ScoredCandidate {
            word: word.into(),
            log_joint: lj,
            origin: CandidateOrigin::UnbiasedSample,
        }
    }

    #[test]
    fn renormalization_examples() {
        let p = biased_estimate(&[scored("a", -3.0), scored("b", -3.0)]).unwrap();
        assert_abs_diff_eq!(p.prob("a"), 0.5, epsilon = 1e-12);
        let p = biased_estimate(&[scored("a", 0.2f64.ln()), scored("b", 0.1f64.ln())]).unwrap();
        assert_abs_diff_eq!(p.prob("a"), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.prob("b"), 1.0 / 3.0, epsilon = 1e-12);
        assert!(biased_estimate(&[]).is_err());
        assert!(biased_estimate(&[scored("a", f64::NAN)]).is_err());
    }

    #[test]
    fn far_tail_candidates_stay_in_support() {
        let p = biased_estimate(&[scored("a", 0.0), scored("b", -2000.0)]).unwrap();
        assert_eq!(p.support_size(), 2);
        assert!(p.prob("b") > 0.0);
    }

    #[test]
    fn human_words_always_get_mass() {
        let cands = build_candidates(["the", "a", "The"], ["his"], Some("the"), "one", ["zebra", "a"]);
        let words: Vec<_> = cands.iter().map(|(w, _)| w.as_str()).collect();
        assert_eq!(words, ["the", "a", "his", "one", "zebra"]);
        assert_eq!(cands[4].1, CandidateOrigin::HumanWord);
        let mut scorer = ReplayScorer::default();
        for (i, (w, _)) in cands.iter().enumerate() {
            scorer.insert("c1", w, -1.0 - 10.0 * i as f64);
        }
        let scored = score_candidates(&ctx(), &cands, &scorer).unwrap();
        let p = biased_estimate(&scored).unwrap();
        for w in ["zebra", "a"] {
            assert!(p.prob(w) > 0.0);
        }
        assert_abs_diff_eq!(p.mass(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn replay_passthrough_and_errors() {
        let scorer = ReplayScorer::from_jsonl(
            "{\"context_id\":\"c1\",\"word\":\"the\",\"log_joint\":-1.2}\n\
             {\"context_id\":\"c1\",\"word\":\"up\",\"log_joint\":0.1}\n",
        )
        .unwrap();
        let out = score_candidates(&ctx(), &[("the".into(), CandidateOrigin::HumanWord)], &scorer).unwrap();
        assert_eq!(out[0].log_joint, -1.2);
        assert_eq!(out[0].word, "the");

        match score_candidates(&ctx(), &[("dog".into(), CandidateOrigin::HumanWord)], &scorer) {
            Err(Error::MissingScore { words, .. }) => assert_eq!(words, vec!["dog"]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            score_candidates(&ctx(), &[("up".into(), CandidateOrigin::HumanWord)], &scorer),
            Err(Error::Scoring(_))
        ));
    }

    #[test]
    fn two_token_word_sums_logprobs() {
        // "There is" + " unbel" + "ievable": offsets 0, 5, 8, 14.
        let offsets = [0, 5, 8, 14];
        let lps = [None, Some(-2.0), Some(-3.25), Some(-0.5)];
        assert_eq!(word_logprob(&offsets, &lps, 8), Some(-3.75));
        assert_eq!(word_logprob(&offsets, &lps, 20), None);
    }
}
