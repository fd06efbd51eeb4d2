use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::BufReader;

use anyhow::{bail, Context as _, Result};
use serde::Serialize;
use varcal::abstraction::{
    cluster_words, load_embeddings, tag_cpd, tvd_with, BaselineTagger, EmbeddingFormat, ExternalTagger,
    KmeansParams, SemanticParams, TagSource, Tagger,
};
use varcal::corpus::Dataset;
use varcal::cpd::{tvd, Cpd};
use varcal::metrics::{split_oracle, EvalConfig};
use varcal::report::{histogram, HistogramData};
use varcal::util::mean;

use crate::cli::{OracleSizes, SemArgs, SynArgs, VectorFormat};
use crate::output::{load_dataset, load_model_cpds, Run};

/// Human, model and oracle-pair distributions of one context.
struct Prepared<'a> {
    id: &'a str,
    text: &'a str,
    human: Cpd,
    model: &'a Cpd,
    oracle_a: Cpd,
    oracle_b: Cpd,
}

fn prepare<'a>(
    dataset: &'a Dataset,
    models: &'a BTreeMap<String, Cpd>,
    sizes: OracleSizes,
    seed: u64,
) -> Result<(Vec<Prepared<'a>>, Vec<String>)> {
    let cfg = EvalConfig {
        oracle_sizes: sizes.0,
        seed,
        ..Default::default()
    };
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for c in &dataset.contexts {
        let (Some(model), Some(rs)) = (models.get(&c.context_id), dataset.responses(&c.context_id)) else {
            skipped.push(c.context_id.clone());
            continue;
        };
        let Ok(split) = split_oracle(rs, cfg.oracle_sizes, cfg.split_seed(&c.context_id, 0)) else {
            skipped.push(c.context_id.clone());
            continue;
        };
        out.push(Prepared {
            id: &c.context_id,
            text: &c.context_text,
            human: dataset.human_cpd(&c.context_id)?,
            model,
            oracle_a: split.oracle_a,
            oracle_b: split.oracle_b,
        });
    }
    Ok((out, skipped))
}

#[derive(Serialize)]
struct Series {
    mean: f64,
    histogram: HistogramData,
}

#[derive(Serialize)]
struct Summary {
    n_contexts: usize,
    skipped: Vec<String>,
    series: BTreeMap<&'static str, Series>,
}

fn summarize(columns: [(&'static str, Vec<f64>); 3], bins: usize, n: usize, skipped: Vec<String>) -> Result<Summary> {
    let mut series = BTreeMap::new();
    for (name, vals) in columns {
        if vals.is_empty() {
            bail!("no context could be evaluated");
        }
        series.insert(
            name,
            Series {
                mean: mean(&vals),
                histogram: histogram(&vals, bins)?,
            },
        );
    }
    Ok(Summary {
        n_contexts: n,
        skipped,
        series,
    })
}

#[derive(Serialize)]
struct SynRow<'a> {
    context_id: &'a str,
    model_vs_human: f64,
    model_vs_oracle: f64,
    oracle_vs_oracle: f64,
}

pub fn syn(args: &SynArgs, run: &mut Run) -> Result<()> {
    let dataset = load_dataset(run, &args.dataset)?;
    let models = load_model_cpds(run, &args.model)?;
    let tagger: Box<dyn Tagger> = match &args.tags {
        Some(p) => {
            run.read_bytes(p)?;
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Box::new(ExternalTagger::from_tsv(BufReader::new(f))?)
        }
        None => Box::new(BaselineTagger),
    };
    run.seed("oracle_split", args.common.seed);
    let (prepared, skipped) = prepare(&dataset, &models, args.oracle_sizes, args.common.seed)?;
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for p in &prepared {
        let mut tag = |src, q: &Cpd| match tag_cpd(tagger.as_ref(), p.id, src, p.text, q) {
            Err(varcal::Error::Tagging(m)) => {
                missing.extend(m);
                None
            }
            other => Some(other),
        };
        let (h, m, a, b) = (
            tag(TagSource::Human, &p.human),
            tag(TagSource::Model, p.model),
            tag(TagSource::OracleA, &p.oracle_a),
            tag(TagSource::OracleB, &p.oracle_b),
        );
        if let (Some(h), Some(m), Some(a), Some(b)) = (h, m, a, b) {
            let (h, m, a, b) = (h?, m?, a?, b?);
            rows.push(SynRow {
                context_id: p.id,
                model_vs_human: tvd(&m, &h),
                model_vs_oracle: tvd(&m, &a),
                oracle_vs_oracle: tvd(&a, &b),
            });
        }
    }
    if !missing.is_empty() {
        return Err(varcal::Error::Tagging(missing)).context("tag annotations missing");
    }
    run.write_jsonl("syn.jsonl", &rows)?;
    let summary = summarize(
        [
            ("model_vs_human", rows.iter().map(|r| r.model_vs_human).collect()),
            ("model_vs_oracle", rows.iter().map(|r| r.model_vs_oracle).collect()),
            ("oracle_vs_oracle", rows.iter().map(|r| r.oracle_vs_oracle).collect()),
        ],
        args.bins,
        rows.len(),
        skipped,
    )?;
    run.write_json("syn_summary.json", &summary)
}

#[derive(Serialize)]
struct SemRow<'a> {
    context_id: &'a str,
    model_vs_human: f64,
    model_vs_oracle: f64,
    oracle_vs_oracle: f64,
    word_model_vs_human: f64,
    k: usize,
    n_oov: usize,
    degenerate: bool,
}

pub fn sem(args: &SemArgs, run: &mut Run) -> Result<()> {
    let dataset = load_dataset(run, &args.dataset)?;
    let models = load_model_cpds(run, &args.model)?;
    let format = match args.embeddings_format {
        Some(VectorFormat::Binary) => EmbeddingFormat::Binary,
        Some(VectorFormat::Text) => EmbeddingFormat::Text,
        None if args.embeddings.extension().is_some_and(|e| e == "bin") => EmbeddingFormat::Binary,
        None => EmbeddingFormat::Text,
    };
    let restrict: Option<HashSet<String>> = args.vocab_restrict.then(|| {
        dataset
            .response_sets
            .values()
            .flat_map(|rs| rs.responses.iter().map(|r| r.word.clone()))
            .chain(models.values().flat_map(|p| p.words().map(str::to_string)))
            .collect()
    });
    let bytes = run.read_bytes(&args.embeddings)?;
    let table = load_embeddings(&bytes[..], format, restrict.as_ref())
        .with_context(|| format!("embeddings {}", args.embeddings.display()))?;
    drop(bytes);
    let params = SemanticParams {
        k: args.k,
        kmeans: KmeansParams {
            n_init: args.n_init,
            max_iter: args.max_iter,
            seed: args.common.seed,
        },
    };
    run.seed("oracle_split", args.common.seed);
    run.seed("kmeans", args.common.seed);
    let (prepared, skipped) = prepare(&dataset, &models, args.oracle_sizes, args.common.seed)?;
    let mut rows = Vec::new();
    for p in &prepared {
        let words: BTreeSet<String> = p.human.words().chain(p.model.words()).map(str::to_string).collect();
        let cl = cluster_words(&words, &table, &params)?;
        let oracle_vs_oracle = if args.recluster_oracles {
            let ow: BTreeSet<String> = p.oracle_a.words().chain(p.oracle_b.words()).map(str::to_string).collect();
            tvd_with(&cluster_words(&ow, &table, &params)?, &p.oracle_a, &p.oracle_b, &table)
        } else {
            tvd_with(&cl, &p.oracle_a, &p.oracle_b, &table)
        };
        rows.push(SemRow {
            context_id: p.id,
            model_vs_human: tvd_with(&cl, p.model, &p.human, &table),
            model_vs_oracle: tvd_with(&cl, p.model, &p.oracle_a, &table),
            oracle_vs_oracle,
            word_model_vs_human: tvd(p.model, &p.human),
            k: cl.k,
            n_oov: cl.oov_group.len(),
            degenerate: cl.degenerate,
        });
    }
    run.write_jsonl("sem.jsonl", &rows)?;
    let summary = summarize(
        [
            ("model_vs_human", rows.iter().map(|r| r.model_vs_human).collect()),
            ("model_vs_oracle", rows.iter().map(|r| r.model_vs_oracle).collect()),
            ("oracle_vs_oracle", rows.iter().map(|r| r.oracle_vs_oracle).collect()),
        ],
        args.bins,
        rows.len(),
        skipped,
    )?;
    run.write_json("sem_summary.json", &summary)
}
