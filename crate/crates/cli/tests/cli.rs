mod common;

use std::fs;

use common::{ok, varcal, Fixture};
use serde_json::{json, Value};

#[test]
fn every_subcommand_is_deterministic() {
    let f = Fixture::new();
    let diffs = common::rerun_differences(&f);
    assert!(diffs.is_empty(), "artifacts differ between runs: {diffs:?}");

    // Spot checks on the artifacts themselves.
    let agg: Value = serde_json::from_slice(&fs::read(f.root.join("evaluate/aggregate.json")).unwrap()).unwrap();
    assert_eq!(agg["n_contexts"], 30);
    assert_eq!(agg["ece"].as_array().unwrap().len(), 3);
    let manifest: Value = serde_json::from_slice(&fs::read(f.root.join("evaluate/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 2);
    assert!(manifest["outputs"]["aggregate.json"].as_str().unwrap().len() == 64);

    let summary: Value = serde_json::from_slice(&fs::read(f.root.join("improve/improve_summary.json")).unwrap()).unwrap();
    for group in summary.as_array().unwrap() {
        assert_eq!(group["summary"].as_array().unwrap().len(), 3);
        assert!(group["closest_k_to_reference"].is_u64());
    }
    // Sweep endpoints: nothing replaced at k=0, everything at k=100.
    let rows: Vec<Value> = fs::read_to_string(f.root.join("improve/improve.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    for k in [0, 100] {
        for sizes in [json!([6, 6]), Value::Null] {
            let sel: Vec<&Value> = rows.iter().filter(|r| r["k_percent"] == k && r["oracle_sizes"] == sizes).collect();
            assert_eq!(sel.len(), 3);
            for r in &sel {
                let n_replaced = r["replaced_context_ids"].as_array().unwrap().len();
                let n = r["tvd_values"].as_array().unwrap().len();
                assert_eq!(n_replaced, if k == 0 { 0 } else { n });
            }
        }
    }

    let sem = fs::read_to_string(f.root.join("sem/sem.jsonl")).unwrap();
    for line in sem.lines() {
        let r: Value = serde_json::from_str(line).unwrap();
        assert!(r["model_vs_human"].as_f64().unwrap() <= r["word_model_vs_human"].as_f64().unwrap() + 1e-12);
    }
    let ard: Value = serde_json::from_slice(&fs::read(f.root.join("regress/ard.json")).unwrap()).unwrap();
    assert_eq!(ard["features"].as_array().unwrap().len(), 15);
    assert!(f.root.join("report/topk_1-2.svg").exists());
    assert!(f.root.join("report/improve_kde_0.svg").exists());
    assert!(fs::read_to_string(f.root.join("report/table.md")).unwrap().contains("Avg TVD"));
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    let out = varcal(&["evaluate", "--dataset", &f.p("x.jsonl"), "--nope"]);
    assert_eq!(out.status.code(), Some(2));

    ok(&["ingest", "--input", &f.p("responses.csv"), "--out-dir", &f.p("ing")]);
    // Neither model input given: a usage problem.
    let out = varcal(&["evaluate", "--dataset", &f.p("ing/dataset.jsonl"), "--out-dir", &f.p("ev")]);
    assert_eq!(out.status.code(), Some(2));

    // A dataset whose responses reference an unknown context is invalid.
    let mut text = fs::read_to_string(f.p("ing/dataset.jsonl")).unwrap();
    text.push_str("this is not json\n");
    fs::write(f.p("bad.jsonl"), text).unwrap();
    let out = varcal(&["evaluate", "--dataset", &f.p("bad.jsonl"), "--generations", &f.p("generations.jsonl"), "--out-dir", &f.p("ev")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(f.root.join("ev/manifest.json").exists());

    let out = varcal(&["experiment", "improve", "--dataset", &f.p("ing/dataset.jsonl"), "--generations", &f.p("generations.jsonl"), "--k", "0,150", "--out-dir", &f.p("imp")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn command_line_overrides_config() {
    let f = Fixture::new();
    ok(&["ingest", "--input", &f.p("responses.csv"), "--out-dir", &f.p("ing")]);
    fs::write(f.p("run.conf"), format!("seed = 5\nresamples = 2\nout_dir = {}\n", f.p("from-config"))).unwrap();
    let base = ["evaluate", "--dataset", &f.p("ing/dataset.jsonl"), "--generations", &f.p("generations.jsonl")];

    let conf = f.p("run.conf");
    let mut a: Vec<&str> = base.to_vec();
    a.extend(["--config", &conf]);
    ok(&a);
    let m: Value = serde_json::from_slice(&fs::read(f.root.join("from-config/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seeds"]["oracle_split"], 5);

    let ev = f.p("cli");
    let mut b: Vec<&str> = base.to_vec();
    b.extend(["--seed", "6", "--config", &conf, "--out-dir", &ev]);
    ok(&b);
    let m: Value = serde_json::from_slice(&fs::read(f.root.join("cli/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seeds"]["oracle_split"], 6);
    let agg: Value = serde_json::from_slice(&fs::read(f.root.join("cli/aggregate.json")).unwrap()).unwrap();
    assert_eq!(agg["resamples"], 2);
}

#[test]
fn exact_word_matching_end_to_end() {
    let f = Fixture::new();
    let csv = fs::read_to_string(f.p("responses.csv")).unwrap().replacen(",cat\n", ",Cat\n", 1);
    fs::write(f.p("mixed.csv"), csv).unwrap();
    ok(&["ingest", "--input", &f.p("mixed.csv"), "--normalization", "exact", "--out-dir", &f.p("ing")]);
    let ds = fs::read_to_string(f.p("ing/dataset.jsonl")).unwrap();
    assert!(ds.contains(r#""word":"Cat""#) && ds.contains(r#""normalization":"exact""#));

    // The canonical file carries its mode; a conflicting flag is a usage error.
    let out = varcal(&["ingest", "--input", &f.p("ing/dataset.jsonl"), "--normalization", "folded", "--out-dir", &f.p("re")]);
    assert_eq!(out.status.code(), Some(2));

    ok(&["estimate", "--generations", &f.p("generations.jsonl"), "--normalization", "exact", "--out-dir", &f.p("est")]);
    let summary: Value = serde_json::from_slice(&fs::read(f.root.join("est/estimate_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["resliced"], "exact");
    ok(&["evaluate", "--dataset", &f.p("ing/dataset.jsonl"), "--model-cpds", &f.p("est/model_cpds.jsonl"), "--resamples", "2", "--out-dir", &f.p("ev")]);
}
