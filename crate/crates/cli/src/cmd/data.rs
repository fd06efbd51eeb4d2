use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context as _, Result};
use serde::Serialize;
use varcal::cpd::Normalization;
use varcal::corpus::{parse_canonical_jsonl, parse_provo_csv, validate_dataset, ColumnMapping};
use varcal::sampler::{
    biased_estimate, build_candidates, collect_generations, estimate_all, reslice, score_candidates,
    write_generations, CollectionConfig, EndpointConfig, GenerationCache, GenerationRecord,
    HttpEndpoint, HttpScorer, LogprobScorer, RejectionStats, ReplayScorer,
};

use crate::cli::{EstimateArgs, IngestArgs, InputFormat, Method, SampleArgs};
use crate::output::{load_dataset, load_generations, CpdRow, Run};
use crate::UsageError;

pub fn ingest(args: &IngestArgs, run: &mut Run) -> Result<()> {
    let format = args.format.unwrap_or_else(|| {
        if args.input.extension().is_some_and(|e| e == "jsonl") {
            InputFormat::Jsonl
        } else {
            InputFormat::Csv
        }
    });
    let raw = run.read_bytes(&args.input)?;
    let dataset = match format {
        InputFormat::Jsonl => {
            let d = parse_canonical_jsonl(&raw[..])?;
            if let Some(m) = args.normalization {
                if Normalization::from(m) != d.normalization() {
                    return Err(UsageError(format!(
                        "--normalization {} disagrees with the dataset's {}",
                        Normalization::from(m).as_str(),
                        d.normalization().as_str()
                    ))
                    .into());
                }
            }
            d
        }
        InputFormat::Csv => {
            if !args.delimiter.is_ascii() {
                return Err(UsageError("--delimiter must be a single ASCII character".into()).into());
            }
            let mapping = ColumnMapping {
                passage: args.col_passage.clone(),
                word_number: args.col_wordnum.clone(),
                context: args.col_context.clone(),
                target: args.col_target.clone(),
                response: args.col_response.clone(),
                count: args.col_count.clone(),
                delimiter: args.delimiter as u8,
                normalization: args.normalization.map_or(Normalization::Folded, Into::into),
            };
            let (d, summary) = parse_provo_csv(&raw[..], &mapping)?;
            run.write_json("ingest_summary.json", &summary)?;
            d
        }
    };
    let report = validate_dataset(&dataset);
    run.write("dataset.jsonl", dataset.emit_canonical_jsonl()?.as_bytes())?;
    run.write_json("validation.json", &report)?;
    log::info!("{} contexts, {} breaches", report.n_contexts, report.breaches.len());
    if !report.breaches.is_empty() {
        bail!("dataset breaks {} invariants; see validation.json", report.breaches.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct SampleSummary<'a> {
    stats: &'a RejectionStats,
    incomplete: &'a [String],
    network_requests: usize,
}

pub fn sample(args: &SampleArgs, run: &mut Run) -> Result<()> {
    let dataset = load_dataset(run, &args.dataset)?;
    let cfg = CollectionConfig {
        model_id: args.model_id.clone(),
        n_per_context: args.n_samples,
        temperature: args.temperature,
        prompt_mode: args.prompt_mode,
        top_p: args.top_p,
        max_tokens: args.max_tokens,
        max_retries: args.max_retries,
        concurrency: args.concurrency.max(1),
        seed: args.common.seed,
        ..Default::default()
    };
    run.seed("sampling", cfg.seed);
    let cache_path = args.cache.clone().unwrap_or_else(|| run.path("cache.jsonl"));
    let mut cache = GenerationCache::open(&cache_path)?;
    let endpoint = HttpEndpoint::new(EndpointConfig::new(&args.endpoint_url, &args.model_id));
    let outcome = collect_generations(&dataset.contexts, &endpoint, &cfg, &mut cache)?;
    run.write("generations.jsonl", write_generations(&outcome.records)?.as_bytes())?;
    run.write_json(
        "sample_summary.json",
        &SampleSummary {
            stats: &outcome.stats,
            incomplete: &outcome.incomplete,
            network_requests: outcome.network_requests,
        },
    )?;
    if !outcome.incomplete.is_empty() {
        bail!("{} contexts hit the retry cap", outcome.incomplete.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct EstimateSummary {
    method: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    resliced: Option<&'static str>,
    stats: RejectionStats,
    n_contexts: usize,
    failed: Vec<String>,
}

fn accepted_by_context(records: &[GenerationRecord]) -> BTreeMap<&str, Vec<&str>> {
    let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in records {
        if let (false, Some(w)) = (r.rejected, &r.sliced_word) {
            out.entry(r.context_id.as_str()).or_default().push(w);
        }
    }
    out
}

fn optional_generations(run: &mut Run, path: &Option<impl AsRef<Path>>) -> Result<Vec<GenerationRecord>> {
    match path {
        Some(p) => load_generations(run, p.as_ref()),
        None => Ok(Vec::new()),
    }
}

pub fn estimate(args: &EstimateArgs, run: &mut Run) -> Result<()> {
    let mut records = load_generations(run, &args.generations)?;
    let resliced = args.normalization.map(Normalization::from);
    if let Some(mode) = resliced {
        if args.method == Method::Biased && mode == Normalization::Exact {
            return Err(UsageError("exact word matching is only supported with --method mc".into()).into());
        }
        reslice(&mut records, mode);
    }
    let stats = RejectionStats::from_records(&records);
    let (cpds, failed, method) = match args.method {
        Method::Mc => {
            let (cpds, failed) = estimate_all(&records);
            (cpds, failed, "mc")
        }
        Method::Biased => {
            let Some(ds) = &args.dataset else {
                return Err(UsageError("--method biased needs --dataset".into()).into());
            };
            let dataset = load_dataset(run, ds)?;
            let scorer: Box<dyn LogprobScorer> = match (&args.scores, &args.endpoint_url, &args.model_id) {
                (Some(p), _, _) => Box::new(ReplayScorer::from_jsonl(&run.read(p)?)?),
                (None, Some(url), Some(model)) => Box::new(HttpScorer::new(EndpointConfig::new(url, model))),
                _ => {
                    return Err(UsageError("--method biased needs --scores or --endpoint-url with --model-id".into()).into())
                }
            };
            let nucleus = optional_generations(run, &args.nucleus_generations)?;
            let greedy = optional_generations(run, &args.greedy_generations)?;
            let (unb, nuc, gr) = (
                accepted_by_context(&records),
                accepted_by_context(&nucleus),
                accepted_by_context(&greedy),
            );
            let mut cpds = BTreeMap::new();
            let mut failed = Vec::new();
            for c in &dataset.contexts {
                let Some(samples) = unb.get(c.context_id.as_str()) else {
                    failed.push(c.context_id.clone());
                    continue;
                };
                let human = dataset.responses(&c.context_id).map(|rs| rs.responses.iter().map(|r| r.word.as_str()).collect::<Vec<_>>()).unwrap_or_default();
                let cands = build_candidates(
                    samples.iter().copied(),
                    nuc.get(c.context_id.as_str()).into_iter().flatten().copied(),
                    gr.get(c.context_id.as_str()).and_then(|g| g.first().copied()),
                    &c.corpus_word,
                    human,
                );
                let scored = score_candidates(c, &cands, scorer.as_ref())
                    .with_context(|| format!("scoring context {}", c.context_id))?;
                cpds.insert(c.context_id.clone(), biased_estimate(&scored)?);
            }
            (cpds, failed, "biased")
        }
    };
    let rows: Vec<CpdRow> = cpds.into_iter().map(|(context_id, cpd)| CpdRow { context_id, cpd }).collect();
    run.write_jsonl("model_cpds.jsonl", &rows)?;
    run.write_json(
        "estimate_summary.json",
        &EstimateSummary {
            method,
            resliced: resliced.map(Normalization::as_str),
            stats,
            n_contexts: rows.len(),
            failed,
        },
    )?;
    Ok(())
}
