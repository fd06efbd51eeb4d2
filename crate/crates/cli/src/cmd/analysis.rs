use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;

use anyhow::{Context as _, Result};
use serde::Serialize;
use varcal::abstraction::{tag_last_word, BaselineTagger, ExternalTagger, Tagger, UniversalTag};
use varcal::ard::{build_features, fit_ard, raw_unit_weights, ArdConfig};
use varcal::experiments::{
    accepted_words, closest_k, improvement_from_dataset, subsample_mse, summarize_sweep,
    token_cpds_from_generations, token_cpds_from_logits, token_level_eval, BpeVocab, SweepSummary,
};
use varcal::metrics::{evaluate, split_oracle, AggregateReport, ContextReport, EvalConfig, Evaluation};
use varcal::report::render_table;
use varcal::util::mean;

use crate::cli::{EvalOpts, EvaluateArgs, ImproveArgs, RegressArgs, SubsampleArgs, TokenArgs};
use crate::output::{load_dataset, load_generations, load_model_cpds, parse_jsonl, Run};
use crate::UsageError;

fn eval_config(opts: &EvalOpts, seed: u64) -> EvalConfig {
    EvalConfig {
        oracle_sizes: opts.oracle_sizes.0,
        seed,
        resamples: opts.resamples,
        n_bins: opts.bins,
        ..Default::default()
    }
}

fn write_evaluation(run: &mut Run, prefix: &str, ev: &Evaluation) -> Result<()> {
    run.write_jsonl(&format!("{prefix}contexts.jsonl"), &ev.contexts)?;
    run.write_json(&format!("{prefix}aggregate.json"), &ev.aggregate)?;
    run.write(&format!("{prefix}table.md"), render_table(&ev.aggregate).as_bytes())
}

pub fn evaluate_cmd(args: &EvaluateArgs, run: &mut Run) -> Result<()> {
    let dataset = load_dataset(run, &args.dataset)?;
    let models = load_model_cpds(run, &args.model)?;
    let cfg = eval_config(&args.eval, args.common.seed);
    run.seed("oracle_split", cfg.seed);
    let ev = evaluate(&dataset, &models, &cfg)?;
    write_evaluation(run, "", &ev)
}

#[derive(Serialize)]
struct ImproveGroup {
    oracle_sizes: Option<(usize, usize)>,
    summary: Vec<SweepSummary>,
    reference_mean: Option<f64>,
    closest_k_to_reference: Option<u32>,
    skipped: Vec<String>,
}

pub fn improve(args: &ImproveArgs, run: &mut Run) -> Result<()> {
    let dataset = load_dataset(run, &args.dataset)?;
    let models = load_model_cpds(run, &args.model)?;
    let reference_mean = match &args.reference_aggregate {
        Some(p) => {
            let agg: AggregateReport = serde_json::from_str(&run.read(p)?).context("reference aggregate")?;
            Some(agg.expected_tvd.oracle_vs_oracle)
        }
        None => None,
    };
    let seeds: Vec<u64> = (0..args.seeds).map(|i| args.common.seed + i).collect();
    run.seed("first", args.common.seed);
    let mut rows = Vec::new();
    let mut groups = Vec::new();
    for sizes in &args.oracle_sizes.0 {
        let (results, skipped) = improvement_from_dataset(&dataset, &models, sizes.0, &args.k.0, &seeds)?;
        let summary = summarize_sweep(&results)?;
        groups.push(ImproveGroup {
            oracle_sizes: sizes.0,
            closest_k_to_reference: reference_mean.and_then(|m| closest_k(&summary, m)),
            reference_mean,
            summary,
            skipped,
        });
        rows.extend(results);
    }
    run.write_jsonl("improve.jsonl", &rows)?;
    run.write_json("improve_summary.json", &groups)
}

#[derive(Serialize)]
struct SizeSummary {
    subsample_size: usize,
    mean_mse: f64,
    seeds: usize,
}

#[derive(Serialize)]
struct SubsampleSummary {
    sizes: Vec<SizeSummary>,
    context_ids: Vec<String>,
    excluded: BTreeMap<String, String>,
}

pub fn subsample(args: &SubsampleArgs, run: &mut Run) -> Result<()> {
    let dataset = load_dataset(run, &args.dataset)?;
    let records = load_generations(run, &args.generations)?;
    let cfg = EvalConfig {
        oracle_sizes: args.oracle_sizes.0,
        seed: args.common.seed,
        ..Default::default()
    };
    run.seed("first", args.common.seed);
    let mut oracle = BTreeMap::new();
    for (id, rs) in &dataset.response_sets {
        if let Ok(s) = split_oracle(rs, cfg.oracle_sizes, cfg.split_seed(id, 0)) {
            oracle.insert(id.clone(), s.oracle_a);
        }
    }
    let seeds: Vec<u64> = (0..args.seeds).map(|i| args.common.seed + i).collect();
    let report = subsample_mse(&accepted_words(&records), &oracle, &args.sizes.0, &seeds)?;
    run.write_jsonl("subsample.jsonl", &report.results)?;
    let sizes = args
        .sizes
        .0
        .iter()
        .map(|&s| {
            let mses: Vec<f64> = report.results.iter().filter(|r| r.subsample_size == s).map(|r| r.mse).collect();
            SizeSummary {
                subsample_size: s,
                mean_mse: mean(&mses),
                seeds: mses.len(),
            }
        })
        .collect();
    run.write_json(
        "subsample_summary.json",
        &SubsampleSummary {
            sizes,
            context_ids: report.context_ids,
            excluded: report.excluded,
        },
    )
}

pub fn token(args: &TokenArgs, run: &mut Run) -> Result<()> {
    let dataset = load_dataset(run, &args.dataset)?;
    let merges = run.read(&args.merges)?;
    let vocab_json = match &args.vocab {
        Some(p) => Some(run.read(p)?),
        None => None,
    };
    let vocab = BpeVocab::load(&merges, vocab_json.as_deref())?;
    let models = match (&args.generations, &args.logits) {
        (Some(g), _) => token_cpds_from_generations(&load_generations(run, g)?, &vocab)?,
        (None, Some(l)) => token_cpds_from_logits(&run.read(l)?)?,
        (None, None) => return Err(UsageError("one of --generations or --logits is required".into()).into()),
    };
    let cfg = eval_config(&args.eval, args.common.seed);
    run.seed("oracle_split", cfg.seed);
    let ev = token_level_eval(&dataset, &models, &vocab, &cfg)?;
    write_evaluation(run, "token_", &ev)
}

#[derive(Serialize)]
struct FeatureFit {
    name: String,
    weight: f64,
    raw_unit_weight: f64,
    variance: f64,
    interval: (f64, f64),
    pruned: bool,
}

#[derive(Serialize)]
struct ArdReport {
    features: Vec<FeatureFit>,
    intercept: f64,
    noise_precision: f64,
    iterations_run: usize,
    converged: bool,
    n_rows: usize,
    constant_features: Vec<String>,
    dropped: Vec<(String, String)>,
    interval_level: f64,
    prune_threshold: Option<f64>,
}

pub fn regress(args: &RegressArgs, run: &mut Run) -> Result<()> {
    let reports: Vec<ContextReport> = parse_jsonl(&run.read(&args.contexts)?, "context reports")?;
    let dataset = load_dataset(run, &args.dataset)?;
    let tagger: Box<dyn Tagger> = match &args.tags {
        Some(p) => {
            run.read_bytes(p)?;
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Box::new(ExternalTagger::from_tsv(BufReader::new(f))?)
        }
        None => Box::new(BaselineTagger),
    };
    let mut tags: BTreeMap<String, UniversalTag> = BTreeMap::new();
    let mut missing = Vec::new();
    for r in &reports {
        let Some(c) = dataset.context(&r.context_id) else { continue };
        match tag_last_word(tagger.as_ref(), &c.context_id, &c.context_text) {
            Ok(t) => {
                tags.insert(c.context_id.clone(), t);
            }
            Err(varcal::Error::Tagging(m)) => missing.extend(m),
            Err(e) => return Err(e.into()),
        }
    }
    if !missing.is_empty() {
        log::warn!("{} contexts lack a last-word tag and are dropped", missing.len());
    }
    let features = build_features(&reports, &tags)?;
    let cfg = ArdConfig {
        max_iters: args.max_iters,
        tol: args.tol,
        interval_level: args.level,
        prune_threshold: (!args.no_prune).then_some(args.prune_threshold),
    };
    let fit = fit_ard(&features.x, &features.y, &cfg)?;
    let raw = raw_unit_weights(&fit, &features);
    let mut csv = Vec::new();
    features.write_csv(&mut csv)?;
    run.write("features.csv", &csv)?;
    run.write_json(
        "ard.json",
        &ArdReport {
            features: features
                .names
                .iter()
                .enumerate()
                .map(|(j, n)| FeatureFit {
                    name: n.clone(),
                    weight: fit.weights[j],
                    raw_unit_weight: raw[j],
                    variance: fit.weight_variances[j],
                    interval: fit.credible_intervals[j],
                    pruned: fit.pruned[j],
                })
                .collect(),
            intercept: fit.intercept,
            noise_precision: fit.noise_precision,
            iterations_run: fit.iterations_run,
            converged: fit.converged,
            n_rows: features.rows.len(),
            constant_features: features.constant_features.clone(),
            dropped: features.dropped.clone(),
            interval_level: cfg.interval_level,
            prune_threshold: cfg.prune_threshold,
        },
    )
}
