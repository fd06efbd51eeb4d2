use std::collections::BTreeMap;

use anyhow::{bail, Context as _, Result};
use serde::Serialize;
use varcal::experiments::ImprovementResult;
use varcal::metrics::{AggregateReport, ContextReport};
use varcal::report::{histogram, kde, render_table, svg, topk_comparison, HistogramData, KdeCurve, TopkComparison};

use crate::cli::ReportArgs;
use crate::output::{load_dataset, load_model_cpds, parse_jsonl, Run};

const SERIES: [&str; 4] = ["model_vs_human", "oracle_vs_oracle", "model_vs_oracle", "oracle_vs_human"];

fn series_values(reports: &[ContextReport]) -> BTreeMap<&'static str, Vec<f64>> {
    let pick: [fn(&ContextReport) -> f64; 4] = [
        |r| r.tvd_model_human,
        |r| r.tvd_oracle_oracle,
        |r| r.tvd_model_oracle,
        |r| r.tvd_oracle_human,
    ];
    SERIES
        .iter()
        .zip(pick)
        .map(|(name, f)| (*name, reports.iter().map(f).collect()))
        .collect()
}

fn file_safe(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

#[derive(Serialize)]
struct ImproveCurves {
    oracle_sizes: Option<(usize, usize)>,
    curves: BTreeMap<u32, KdeCurve>,
}

pub fn report(args: &ReportArgs, run: &mut Run) -> Result<()> {
    let reports: Vec<ContextReport> = parse_jsonl(&run.read(&args.contexts)?, "context reports")?;
    if reports.is_empty() {
        bail!("no context reports in {}", args.contexts.display());
    }
    let values = series_values(&reports);
    let mut hists: BTreeMap<&str, HistogramData> = BTreeMap::new();
    let mut kdes: BTreeMap<&str, KdeCurve> = BTreeMap::new();
    for (name, v) in &values {
        hists.insert(name, histogram(v, args.bins)?);
        if v.len() >= 2 {
            kdes.insert(name, kde(v, None)?);
        }
    }
    run.write_json("histograms.json", &hists)?;
    run.write_json("kde.json", &kdes)?;
    let pair = ["model_vs_human", "oracle_vs_oracle"];
    let hist_series: Vec<(&str, &HistogramData)> = pair.iter().map(|n| (*n, &hists[n])).collect();
    run.write("tvd_histogram.svg", svg::histogram_chart("Per-context TVD", &hist_series).as_bytes())?;
    if pair.iter().all(|n| kdes.contains_key(n)) {
        let kde_series: Vec<(&str, &[f64], &[f64])> =
            pair.iter().map(|n| (*n, kdes[n].xs.as_slice(), kdes[n].ys.as_slice())).collect();
        run.write("tvd_kde.svg", svg::line_chart("Per-context TVD (KDE)", &kde_series).as_bytes())?;
    }

    if let Some(p) = &args.aggregate {
        let agg: AggregateReport = serde_json::from_str(&run.read(p)?).context("aggregate")?;
        run.write("table.md", render_table(&agg).as_bytes())?;
    }

    if let Some(p) = &args.improve {
        let rows: Vec<ImprovementResult> = parse_jsonl(&run.read(p)?, "sweep rows")?;
        let mut pooled: BTreeMap<Option<(usize, usize)>, BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
        for r in &rows {
            pooled
                .entry(r.oracle_sizes)
                .or_default()
                .entry(r.k_percent)
                .or_default()
                .extend(&r.tvd_values);
        }
        let mut all = Vec::new();
        for (i, (sizes, by_k)) in pooled.iter().enumerate() {
            let curves = by_k
                .iter()
                .filter(|(_, v)| v.len() >= 2)
                .map(|(k, v)| Ok((*k, kde(v, None)?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            let labels: Vec<String> = curves.keys().map(|k| format!("k={k}")).collect();
            let series: Vec<(&str, &[f64], &[f64])> = labels
                .iter()
                .zip(curves.values())
                .map(|(l, c)| (l.as_str(), c.xs.as_slice(), c.ys.as_slice()))
                .collect();
            let title = match sizes {
                Some((a, b)) => format!("Improvement sweep, oracles {a}/{b}"),
                None => "Improvement sweep, half splits".to_string(),
            };
            run.write(&format!("improve_kde_{i}.svg"), svg::line_chart(&title, &series).as_bytes())?;
            all.push(ImproveCurves {
                oracle_sizes: *sizes,
                curves,
            });
        }
        run.write_json("improve_kde.json", &all)?;
    }

    if let (Some(ds), Some(ids)) = (&args.dataset, &args.topk_contexts) {
        let dataset = load_dataset(run, ds)?;
        let models = load_model_cpds(
            run,
            &crate::cli::ModelInput {
                model_cpds: args.model_cpds.clone(),
                generations: None,
            },
        )?;
        let mut out: BTreeMap<&str, TopkComparison> = BTreeMap::new();
        for id in &ids.0 {
            let human = dataset.human_cpd(id).with_context(|| format!("context {id}"))?;
            let model = models.get(id).with_context(|| format!("no model distribution for {id}"))?;
            let cmp = topk_comparison(&human, model, args.topk);
            let title = dataset.context(id).map_or(id.clone(), |c| c.context_text.clone());
            run.write(&format!("topk_{}.svg", file_safe(id)), svg::paired_bars(&title, &cmp).as_bytes())?;
            out.insert(id, cmp);
        }
        run.write_json("topk.json", &out)?;
    }
    Ok(())
}
