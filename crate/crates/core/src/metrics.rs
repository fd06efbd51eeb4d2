//! Calibration metrics over per-context distributions.
//!
//! Two views are computed side by side. Expected calibration error bins the
//! confidence of each system's mode prediction against a single gold label.
//! Expected TVD compares whole distributions against the human one. Oracle
//! controls come from splitting each context's human answers in two
//! disjoint halves.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Context, Dataset, ResponseSet};
use crate::cpd::{entropy, mle, mode, tvd, Cpd, TieBreak, WordCounts};
use crate::error::{Error, Result};
use crate::util::{derive_seed, mean, seeded_rng, std_dev};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldConvention {
    OriginalCorpusWord,
    HumanMajority,
    OracleMajority,
}

impl GoldConvention {
    pub const ALL: [GoldConvention; 3] = [
        GoldConvention::OriginalCorpusWord,
        GoldConvention::HumanMajority,
        GoldConvention::OracleMajority,
    ];
}

impl fmt::Display for GoldConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GoldConvention::OriginalCorpusWord => "original",
            GoldConvention::HumanMajority => "human_majority",
            GoldConvention::OracleMajority => "oracle_majority",
        })
    }
}

/// Two disjoint halves of one context's human answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSplit {
    pub context_id: String,
    pub oracle_a: Cpd,
    pub oracle_b: Cpd,
    pub counts_a: WordCounts,
    pub counts_b: WordCounts,
    pub sizes: (usize, usize),
    pub seed: u64,
}

/// Draws two disjoint halves without replacement. With `sizes` unset the
/// answers are split `(N/2, N - N/2)`.
pub fn split_oracle(
    responses: &ResponseSet,
    sizes: Option<(usize, usize)>,
    seed: u64,
) -> Result<OracleSplit> {
    let mut pool = responses.counts().expand();
    let n = pool.len();
    let (a, b) = sizes.unwrap_or((n / 2, n - n / 2));
    if a == 0 || b == 0 || a + b > n {
        return Err(Error::Split(format!(
            "{}: cannot draw halves of {a} and {b} from {n} responses",
            responses.context_id
        )));
    }
    let mut rng = seeded_rng(seed);
    pool.shuffle(&mut rng);
    let counts_a: WordCounts = pool[..a].iter().cloned().collect();
    let counts_b: WordCounts = pool[a..a + b].iter().cloned().collect();
    Ok(OracleSplit {
        context_id: responses.context_id.clone(),
        oracle_a: mle(&counts_a)?,
        oracle_b: mle(&counts_b)?,
        counts_a,
        counts_b,
        sizes: (a, b),
        seed,
    })
}

/// One reliability bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EceBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub avg_confidence: f64,
    pub accuracy: f64,
}

/// Equal-width reliability bins over `[0, 1]`; left-inclusive, last bin
/// closed. Empty bins are included with zero count.
pub fn ece_bins(points: &[(f64, bool)], n_bins: usize) -> Result<Vec<EceBin>> {
    if n_bins == 0 {
        return Err(Error::Metric("n_bins must be at least 1".into()));
    }
    let mut sums = vec![(0usize, 0.0f64, 0usize); n_bins];
    for &(conf, correct) in points {
        if !(0.0..=1.0).contains(&conf) {
            return Err(Error::Metric(format!("confidence {conf} outside [0, 1]")));
        }
        let b = ((conf * n_bins as f64) as usize).min(n_bins - 1);
        sums[b].0 += 1;
        sums[b].1 += conf;
        sums[b].2 += correct as usize;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(i, (count, conf, hits))| EceBin {
            lower: i as f64 / n_bins as f64,
            upper: (i + 1) as f64 / n_bins as f64,
            count,
            avg_confidence: if count > 0 { conf / count as f64 } else { 0.0 },
            accuracy: if count > 0 { hits as f64 / count as f64 } else { 0.0 },
        })
        .collect())
}

/// Expected calibration error: bin-weighted gap between mean confidence and
/// accuracy.
pub fn ece(points: &[(f64, bool)], n_bins: usize) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Metric("no points".into()));
    }
    let n = points.len() as f64;
    Ok(ece_bins(points, n_bins)?
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| b.count as f64 / n * (b.avg_confidence - b.accuracy).abs())
        .sum())
}

pub fn gold_label(
    context: &Context,
    convention: GoldConvention,
    human: &Cpd,
    oracle: Option<&OracleSplit>,
    tie_break: TieBreak,
) -> Result<String> {
    match convention {
        GoldConvention::OriginalCorpusWord => Ok(context.corpus_word.clone()),
        GoldConvention::HumanMajority => Ok(mode(human, tie_break).word),
        GoldConvention::OracleMajority => oracle
            .map(|s| mode(&s.oracle_a, tie_break).word)
            .ok_or_else(|| Error::Usage("oracle-majority gold needs an oracle split".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    /// The full human distribution.
    Human,
    /// The second oracle half, scored against gold derived elsewhere.
    Oracle,
    Model,
}

impl System {
    pub const ALL: [System; 3] = [System::Human, System::Oracle, System::Model];
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub oracle_sizes: Option<(usize, usize)>,
    pub seed: u64,
    pub resamples: usize,
    pub n_bins: usize,
    pub tie_break: TieBreak,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            oracle_sizes: None,
            seed: 0,
            resamples: 20,
            n_bins: 10,
            tie_break: TieBreak::Lexicographic,
        }
    }
}

impl EvalConfig {
    /// Seed of the oracle split for one context and resample.
    pub fn split_seed(&self, context_id: &str, resample: usize) -> u64 {
        derive_seed(self.seed, context_id, resample as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldLabels {
    pub original: String,
    pub human_majority: String,
    pub oracle_majority: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correctness {
    pub original: bool,
    pub human_majority: bool,
    pub oracle_majority: bool,
}

/// Everything measured for one context, using the designated oracle split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextReport {
    pub context_id: String,
    pub tvd_model_human: f64,
    pub tvd_oracle_oracle: f64,
    /// Model against the first oracle half (the regression target).
    pub tvd_model_oracle: f64,
    /// Second oracle half against the full human distribution.
    pub tvd_oracle_human: f64,
    pub entropy_human: f64,
    pub entropy_model: f64,
    pub context_length_words: usize,
    pub model_mode: String,
    pub model_confidence: f64,
    pub gold: GoldLabels,
    pub correct: Correctness,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EceRow {
    pub gold: GoldConvention,
    pub cells: BTreeMap<System, Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedTvd {
    pub model_vs_human: f64,
    pub model_vs_oracle: f64,
    pub oracle_vs_oracle: f64,
    pub oracle_vs_human: f64,
}

/// Table-style summary: one ECE row per gold convention, one column per
/// system, plus expected TVD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n_contexts: usize,
    pub n_bins: usize,
    pub resamples: usize,
    pub ece: Vec<EceRow>,
    pub expected_tvd: ExpectedTvd,
    /// Contexts without a model distribution.
    pub skipped_no_model: Vec<String>,
    /// Contexts with too few answers to split.
    pub skipped_unsplittable: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub contexts: Vec<ContextReport>,
    pub aggregate: AggregateReport,
}

struct Prepared<'a> {
    context: &'a Context,
    responses: &'a ResponseSet,
    human: Cpd,
    model: &'a Cpd,
}

type Points = BTreeMap<(GoldConvention, System), Vec<(f64, bool)>>;

fn context_points(p: &Prepared<'_>, split: &OracleSplit, cfg: &EvalConfig) -> Result<Vec<(GoldConvention, System, f64, bool)>> {
    let mut out = Vec::with_capacity(9);
    let preds = [
        (System::Human, mode(&p.human, cfg.tie_break)),
        (System::Oracle, mode(&split.oracle_b, cfg.tie_break)),
        (System::Model, mode(p.model, cfg.tie_break)),
    ];
    for conv in GoldConvention::ALL {
        let gold = gold_label(p.context, conv, &p.human, Some(split), cfg.tie_break)?;
        for (sys, m) in &preds {
            out.push((conv, *sys, m.probability, m.word == gold));
        }
    }
    Ok(out)
}

/// Runs the full per-context evaluation and the aggregate table.
pub fn evaluate(dataset: &Dataset, model_cpds: &BTreeMap<String, Cpd>, cfg: &EvalConfig) -> Result<Evaluation> {
    let mut skipped_no_model = Vec::new();
    let mut skipped_unsplittable = Vec::new();
    let mut prepared = Vec::new();
    for c in &dataset.contexts {
        let Some(model) = model_cpds.get(&c.context_id) else {
            skipped_no_model.push(c.context_id.clone());
            continue;
        };
        let Some(responses) = dataset.responses(&c.context_id) else {
            continue;
        };
        if responses.total() < 2 {
            skipped_unsplittable.push(c.context_id.clone());
            continue;
        }
        if let Some((a, b)) = cfg.oracle_sizes {
            if (responses.total() as usize) < a + b {
                skipped_unsplittable.push(c.context_id.clone());
                continue;
            }
        }
        prepared.push(Prepared {
            context: c,
            responses,
            human: mle(&responses.counts())?,
            model,
        });
    }
    if prepared.is_empty() {
        return Err(Error::Evaluation("no context has both a model distribution and enough answers".into()));
    }

    let resamples = cfg.resamples.max(1);
    // One (reports, points) pass per resample; resample 0 is designated.
    let passes: Vec<(Vec<ContextReport>, Points)> = (0..resamples)
        .into_par_iter()
        .map(|r| -> Result<(Vec<ContextReport>, Points)> {
            let per_context: Vec<(Option<ContextReport>, Vec<(GoldConvention, System, f64, bool)>)> = prepared
                .par_iter()
                .map(|p| -> Result<_> {
                    let split = split_oracle(p.responses, cfg.oracle_sizes, cfg.split_seed(&p.context.context_id, r))?;
                    let points = context_points(p, &split, cfg)?;
                    let report = (r == 0).then(|| context_report(p, &split, cfg)).transpose()?;
                    Ok((report, points))
                })
                .collect::<Result<_>>()?;
            let mut reports = Vec::new();
            let mut points: Points = BTreeMap::new();
            for (rep, pts) in per_context {
                reports.extend(rep);
                for (conv, sys, conf, ok) in pts {
                    points.entry((conv, sys)).or_default().push((conf, ok));
                }
            }
            Ok((reports, points))
        })
        .collect::<Result<_>>()?;

    let mut per_cell: BTreeMap<(GoldConvention, System), Vec<f64>> = BTreeMap::new();
    for (_, points) in &passes {
        for (key, pts) in points {
            per_cell.entry(*key).or_default().push(ece(pts, cfg.n_bins)?);
        }
    }
    let ece_rows = GoldConvention::ALL
        .iter()
        .map(|&gold| EceRow {
            gold,
            cells: System::ALL
                .iter()
                .map(|&sys| {
                    let vals = &per_cell[&(gold, sys)];
                    (sys, Cell { mean: mean(vals), std: std_dev(vals) })
                })
                .collect(),
        })
        .collect();

    let reports = passes.into_iter().next().map(|(r, _)| r).unwrap_or_default();
    let col = |f: fn(&ContextReport) -> f64| mean(&reports.iter().map(f).collect::<Vec<_>>());
    let expected_tvd = ExpectedTvd {
        model_vs_human: col(|r| r.tvd_model_human),
        model_vs_oracle: col(|r| r.tvd_model_oracle),
        oracle_vs_oracle: col(|r| r.tvd_oracle_oracle),
        oracle_vs_human: col(|r| r.tvd_oracle_human),
    };
    Ok(Evaluation {
        aggregate: AggregateReport {
            n_contexts: reports.len(),
            n_bins: cfg.n_bins,
            resamples,
            ece: ece_rows,
            expected_tvd,
            skipped_no_model,
            skipped_unsplittable,
        },
        contexts: reports,
    })
}

fn context_report(p: &Prepared<'_>, split: &OracleSplit, cfg: &EvalConfig) -> Result<ContextReport> {
    let m = mode(p.model, cfg.tie_break);
    let gold = GoldLabels {
        original: gold_label(p.context, GoldConvention::OriginalCorpusWord, &p.human, Some(split), cfg.tie_break)?,
        human_majority: gold_label(p.context, GoldConvention::HumanMajority, &p.human, Some(split), cfg.tie_break)?,
        oracle_majority: gold_label(p.context, GoldConvention::OracleMajority, &p.human, Some(split), cfg.tie_break)?,
    };
    let correct = Correctness {
        original: m.word == gold.original,
        human_majority: m.word == gold.human_majority,
        oracle_majority: m.word == gold.oracle_majority,
    };
    Ok(ContextReport {
        context_id: p.context.context_id.clone(),
        tvd_model_human: tvd(p.model, &p.human),
        tvd_oracle_oracle: tvd(&split.oracle_a, &split.oracle_b),
        tvd_model_oracle: tvd(p.model, &split.oracle_a),
        tvd_oracle_human: tvd(&split.oracle_b, &p.human),
        entropy_human: entropy(&p.human),
        entropy_model: entropy(p.model),
        context_length_words: p.context.length_words(),
        model_mode: m.word,
        model_confidence: m.probability,
        gold,
        correct,
    })
}

/// Mean of per-context TVDs.
pub fn expected_tvd(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Metric("no values".into()));
    }
    Ok(mean(values))
}

impl FromStr for GoldConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(GoldConvention::OriginalCorpusWord),
            "human_majority" => Ok(GoldConvention::HumanMajority),
            "oracle_majority" => Ok(GoldConvention::OracleMajority),
            other => Err(Error::Usage(format!("unknown gold convention `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Response;
    use approx::assert_abs_diff_eq;

    fn rs(id: &str, words: &[(&str, u64)]) -> ResponseSet {
        ResponseSet {
            context_id: id.into(),
            responses: words
                .iter()
                .map(|(w, c)| Response { word: w.to_string(), count: *c })
                .collect(),
        }
    }

    fn ctx(id: &str, corpus_word: &str) -> Context {
        Context {
            context_id: id.into(),
            passage_id: "1".into(),
            word_number: 1,
            context_text: "one two three".into(),
            corpus_word: corpus_word.into(),
        }
    }

    #[test]
    fn identical_answers_give_identical_halves() {
        let s = split_oracle(&rs("c", &[("the", 40)]), None, 3).unwrap();
        assert_eq!(tvd(&s.oracle_a, &s.oracle_b), 0.0);
        assert_eq!(s.sizes, (20, 20));
    }

    #[test]
    fn fixed_sizes_and_odd_totals() {
        let r = rs("c", &[("a", 25), ("b", 16)]);
        assert_eq!(split_oracle(&r, Some((10, 10)), 1).unwrap().sizes, (10, 10));
        assert_eq!(split_oracle(&r, Some((20, 20)), 1).unwrap().sizes, (20, 20));
        let s = split_oracle(&r, None, 1).unwrap();
        assert_eq!(s.sizes, (20, 21));
        assert_eq!(s.counts_a.total() + s.counts_b.total(), 41);
        assert!(matches!(split_oracle(&rs("c", &[("a", 1)]), None, 0), Err(Error::Split(_))));
        assert!(matches!(split_oracle(&r, Some((30, 30)), 0), Err(Error::Split(_))));
    }

    #[test]
    fn two_by_two_split_is_one_of_three_partitions() {
        let r = rs("c", &[("a", 2), ("b", 2)]);
        let partitions = [(2u64, 0u64), (1, 1), (0, 2)];
        for seed in 0..50 {
            let s = split_oracle(&r, Some((2, 2)), seed).unwrap();
            let a = (s.counts_a.get("a"), s.counts_a.get("b"));
            assert!(partitions.contains(&a));
            assert_eq!(s.counts_a.get("a") + s.counts_b.get("a"), 2);
            assert_eq!(s.counts_a.get("b") + s.counts_b.get("b"), 2);
        }
    }

    #[test]
    fn ece_examples() {
        assert_eq!(ece(&[(1.0, true); 10], 10).unwrap(), 0.0);
        let pts = [(0.8, true), (0.8, false), (0.8, true), (0.8, false)];
        assert_abs_diff_eq!(ece(&pts, 1).unwrap(), 0.3, epsilon = 1e-12);
        assert!(matches!(ece(&[], 10), Err(Error::Metric(_))));
        // 1.0 falls in the last (closed) bin; 0.1 opens the second bin.
        let bins = ece_bins(&[(1.0, true), (0.1, false)], 10).unwrap();
        assert_eq!(bins[9].count, 1);
        assert_eq!(bins[1].count, 1);
    }

    #[test]
    fn gold_examples() {
        let c = ctx("c", "stated");
        let human = Cpd::from_probs([("said", 0.6), ("told", 0.4)]).unwrap();
        assert_eq!(
            gold_label(&c, GoldConvention::OriginalCorpusWord, &human, None, TieBreak::Lexicographic).unwrap(),
            "stated"
        );
        assert_eq!(
            gold_label(&c, GoldConvention::HumanMajority, &human, None, TieBreak::Lexicographic).unwrap(),
            "said"
        );
        assert!(matches!(
            gold_label(&c, GoldConvention::OracleMajority, &human, None, TieBreak::Lexicographic),
            Err(Error::Usage(_))
        ));
        let split = split_oracle(&rs("c", &[("a", 2), ("b", 2)]), Some((2, 2)), 0).unwrap();
        let tied = OracleSplit {
            oracle_a: Cpd::from_probs([("b", 0.5), ("a", 0.5)]).unwrap(),
            ..split
        };
        assert_eq!(
            gold_label(&c, GoldConvention::OracleMajority, &human, Some(&tied), TieBreak::Lexicographic).unwrap(),
            "a"
        );
    }

    fn dataset(n: usize) -> Dataset {
        let mut d = Dataset::default();
        for i in 0..n {
            let id = format!("c{i}");
            d.contexts.push(ctx(&id, "a"));
            d.response_sets.insert(id.clone(), rs(&id, &[("a", 12), ("b", 6), ("c", 2)]));
        }
        d
    }

    #[test]
    fn model_equal_to_humans_has_zero_tvd() {
        let d = dataset(4);
        let models: BTreeMap<_, _> = d
            .contexts
            .iter()
            .map(|c| (c.context_id.clone(), d.human_cpd(&c.context_id).unwrap()))
            .collect();
        let ev = evaluate(&d, &models, &EvalConfig::default()).unwrap();
        assert_eq!(ev.aggregate.expected_tvd.model_vs_human, 0.0);
        assert!(ev.contexts.iter().all(|r| r.tvd_model_human == 0.0));
        assert_eq!(ev.aggregate.n_contexts, 4);
        assert_eq!(ev.aggregate.ece.len(), 3);
    }

    #[test]
    fn missing_models_are_skipped_and_listed() {
        let d = dataset(3);
        let models = BTreeMap::from([("c1".to_string(), Cpd::point_mass("a"))]);
        let ev = evaluate(&d, &models, &EvalConfig { resamples: 2, ..Default::default() }).unwrap();
        assert_eq!(ev.aggregate.skipped_no_model, vec!["c0", "c2"]);
        assert_eq!(ev.contexts.len(), 1);
        assert!(matches!(
            evaluate(&d, &BTreeMap::new(), &EvalConfig::default()),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn evaluation_is_deterministic() {
        let d = dataset(5);
        let models: BTreeMap<_, _> = d
            .contexts
            .iter()
            .map(|c| (c.context_id.clone(), Cpd::from_probs([("a", 0.9), ("z", 0.1)]).unwrap()))
            .collect();
        let cfg = EvalConfig { resamples: 4, ..Default::default() };
        let a = serde_json::to_string(&evaluate(&d, &models, &cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&evaluate(&d, &models, &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn expected_tvd_is_the_mean() {
        assert_abs_diff_eq!(expected_tvd(&[0.2, 0.4, 0.6]).unwrap(), 0.4, epsilon = 1e-12);
        assert!(expected_tvd(&[]).is_err());
    }
}
