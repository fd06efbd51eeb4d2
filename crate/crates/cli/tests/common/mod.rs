//! Fixture and pipeline shared by the CLI test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub const VOCAB: [(&str, [f64; 3]); 12] = [
    ("cat", [1.0, 0.1, 0.0]),
    ("dog", [0.9, 0.2, 0.1]),
    ("cow", [1.1, 0.0, 0.2]),
    ("horse", [0.8, 0.1, 0.1]),
    ("car", [0.0, 1.0, 0.1]),
    ("bus", [0.1, 0.9, 0.0]),
    ("truck", [0.2, 1.1, 0.1]),
    ("red", [0.0, 0.1, 1.0]),
    ("blue", [0.1, 0.0, 0.9]),
    ("green", [0.2, 0.1, 1.1]),
    ("the", [0.5, 0.5, 0.5]),
    ("quickly", [0.4, 0.6, 0.5]),
];

/// Small deterministic generator so fixtures need no RNG crate.
pub struct Lcg(u64);

impl Lcg {
    pub fn next(&mut self) -> usize {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 33) as usize
    }

    pub fn pick<'a>(&mut self, words: &[&'a str], skew: usize) -> &'a str {
        // Minimum of `skew` draws favours early words.
        let i = (0..skew).map(|_| self.next() % words.len()).min().unwrap();
        words[i]
    }
}

pub struct Fixture {
    pub _dir: tempfile::TempDir,
    pub root: PathBuf,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let mut rng = Lcg(42);
        let words: Vec<&str> = VOCAB.iter().map(|v| v.0).collect();
        let mut csv = String::from("passage_id,word_number,context,word,response\n");
        let mut gens = String::new();
        let openers = ["The old", "A small", "Every morning the", "They saw a big", "It was."];
        for passage in 1..=3 {
            for wn in 2..=11 {
                let ctx = format!("{} {}", openers[(passage + wn) % openers.len()], "x ".repeat(wn).trim_end());
                let target = words[(passage * wn) % words.len()];
                let mut shuffled = words.clone();
                shuffled.rotate_left((passage + wn) % 4);
                for _ in 0..(16 + (passage * wn) % 9) {
                    csv.push_str(&format!("{passage},{wn},\"{ctx}\",{target},{}\n", rng.pick(&shuffled, 2)));
                }
                shuffled.rotate_left(1);
                for s in 0..40 {
                    let w = rng.pick(&shuffled, 3);
                    let rejected = s % 17 == 16;
                    gens.push_str(
                        &json!({
                            "context_id": format!("{passage}-{wn}"),
                            "model_id": "toy",
                            "sample_index": s,
                            "raw_text": if rejected { " ".to_string() } else { format!(" {w} and") },
                            "sliced_word": if rejected { Value::Null } else { json!(w) },
                            "rejected": rejected,
                            "temperature": 1.0,
                            "prompt_mode": "completion",
                            "seed": 0
                        })
                        .to_string(),
                    );
                    gens.push('\n');
                }
            }
        }
        fs::write(root.join("responses.csv"), csv).unwrap();
        fs::write(root.join("generations.jsonl"), gens).unwrap();
        let mut emb = format!("{} 3\n", VOCAB.len());
        for (w, v) in VOCAB {
            emb.push_str(&format!("{w} {} {} {}\n", v[0], v[1], v[2]));
        }
        fs::write(root.join("vectors.txt"), emb).unwrap();
        Fixture { _dir: dir, root }
    }

    pub fn p(&self, name: &str) -> String {
        self.root.join(name).display().to_string()
    }
}

pub fn varcal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varcal"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

pub fn ok(args: &[&str]) {
    let out = varcal(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        let name = e.file_name().to_string_lossy().into_owned();
        let mut bytes = fs::read(e.path()).unwrap();
        if name == "manifest.json" {
            let mut v: Value = serde_json::from_slice(&bytes).unwrap();
            v.as_object_mut().unwrap().remove("created_at");
            bytes = serde_json::to_vec(&v).unwrap();
        }
        out.insert(name, bytes);
    }
    out
}

pub fn bpe_data(name: &str) -> String {
    format!("{}/../core/tests/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

/// Every step of the pipeline, as (out-dir name, argv).
pub fn pipeline(f: &Fixture) -> Vec<(String, Vec<String>)> {
    let ds = f.p("ingest/dataset.jsonl");
    let cpds = f.p("estimate/model_cpds.jsonl");
    let contexts = f.p("evaluate/contexts.jsonl");
    let agg = f.p("evaluate/aggregate.json");
    let steps: Vec<(&str, Vec<String>)> = vec![
        ("ingest", vec!["ingest".into(), "--input".into(), f.p("responses.csv")]),
        ("estimate", vec!["estimate".into(), "--generations".into(), f.p("generations.jsonl")]),
        ("evaluate", vec!["evaluate".into(), "--dataset".into(), ds.clone(), "--model-cpds".into(), cpds.clone(), "--resamples".into(), "5".into()]),
        (
            "improve",
            vec!["experiment", "improve", "--dataset", &ds, "--model-cpds", &cpds, "--k", "0,50,100", "--seeds", "3", "--oracle-sizes", "6,6;half", "--reference-aggregate", &agg]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
        (
            "subsample",
            vec!["experiment", "subsample", "--dataset", &ds, "--generations", &f.p("generations.jsonl"), "--sizes", "5,10,30", "--seeds", "4"]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
        (
            "token",
            vec!["experiment", "token", "--dataset", &ds, "--generations", &f.p("generations.jsonl"), "--merges", &bpe_data("bpe-merges.txt"), "--vocab", &bpe_data("bpe-vocab.json"), "--resamples", "3"]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
        ("regress", vec!["regress".into(), "--contexts".into(), contexts.clone(), "--dataset".into(), ds.clone()]),
        ("syn", vec!["abstract".into(), "syn".into(), "--dataset".into(), ds.clone(), "--model-cpds".into(), cpds.clone()]),
        (
            "sem",
            vec!["abstract", "sem", "--dataset", &ds, "--model-cpds", &cpds, "--embeddings", &f.p("vectors.txt"), "--vocab-restrict", "--n-init", "4"]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
        (
            "report",
            vec!["report", "--contexts", &contexts, "--aggregate", &agg, "--improve", &f.p("improve/improve.jsonl"), "--dataset", &ds, "--model-cpds", &cpds, "--topk-contexts", "1-2,3-11"]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
    ];
    steps
        .into_iter()
        .map(|(name, mut argv)| {
            argv.push("--out-dir".into());
            argv.push(f.p(name));
            (name.to_string(), argv)
        })
        .collect()
}


/// Runs the pipeline twice into the same directories and returns every
/// artifact that differed between the runs (manifests compared without
/// their timestamp).
pub fn rerun_differences(f: &Fixture) -> Vec<String> {
    let steps = pipeline(f);
    let run_all = || {
        steps
            .iter()
            .map(|(name, argv)| {
                let a: Vec<&str> = argv.iter().map(String::as_str).collect();
                ok(&a);
                (name.clone(), snapshot(&f.root.join(name)))
            })
            .collect::<BTreeMap<_, _>>()
    };
    let first = run_all();
    let second = run_all();
    let mut diffs = Vec::new();
    for (name, files) in &first {
        let again = &second[name];
        for file in files.keys().chain(again.keys()) {
            if files.get(file) != again.get(file) {
                diffs.push(format!("{name}/{file}"));
            }
        }
    }
    diffs.sort();
    diffs.dedup();
    diffs
}
