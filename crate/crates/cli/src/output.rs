use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use serde::{Deserialize, Serialize};
use varcal::corpus::{parse_canonical_jsonl, Dataset};
use varcal::cpd::Cpd;
use varcal::report::Manifest;
use varcal::sampler::{estimate_all, read_generations, GenerationRecord};
use varcal::util::digest_hex;

use crate::cli::ModelInput;
use crate::UsageError;

/// One run's inputs, outputs and seeds, flushed to `manifest.json`.
pub struct Run {
    out_dir: PathBuf,
    command: Vec<String>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    seeds: BTreeMap<String, u64>,
}

impl Run {
    pub fn new(out_dir: &Path, command: Vec<String>) -> Result<Self> {
        fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        Ok(Run {
            out_dir: out_dir.to_path_buf(),
            command,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            seeds: BTreeMap::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn read(&mut self, path: &Path) -> Result<String> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(path.display().to_string(), digest_hex(&bytes));
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
    }

    pub fn read_bytes(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(path.display().to_string(), digest_hex(&bytes));
        Ok(bytes)
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        self.outputs.insert(name.to_string(), digest_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn write_jsonl<'a, T: Serialize + 'a>(&mut self, name: &str, rows: impl IntoIterator<Item = &'a T>) -> Result<()> {
        let mut s = String::new();
        for r in rows {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        self.write(name, s.as_bytes())
    }

    pub fn finish(self) -> Result<()> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command,
            inputs: self.inputs,
            outputs: self.outputs,
            seeds: self.seeds,
            created_at: chrono::Utc::now().to_rfc3339(),
        };
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        let p = self.out_dir.join("manifest.json");
        fs::write(&p, s).with_context(|| format!("writing {}", p.display()))
    }
}

pub fn parse_jsonl<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{what}, line {}", i + 1)))
        .collect()
}

pub fn load_dataset(run: &mut Run, path: &Path) -> Result<Dataset> {
    let text = run.read(path)?;
    Ok(parse_canonical_jsonl(text.as_bytes()).with_context(|| format!("dataset {}", path.display()))?)
}

pub fn load_generations(run: &mut Run, path: &Path) -> Result<Vec<GenerationRecord>> {
    let text = run.read(path)?;
    Ok(read_generations(&text).with_context(|| format!("generations {}", path.display()))?)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CpdRow {
    pub context_id: String,
    pub cpd: Cpd,
}

pub fn load_model_cpds(run: &mut Run, input: &ModelInput) -> Result<BTreeMap<String, Cpd>> {
    match (&input.model_cpds, &input.generations) {
        (Some(p), _) => {
            let text = run.read(p)?;
            let rows: Vec<CpdRow> = parse_jsonl(&text, "model cpds")?;
            Ok(rows.into_iter().map(|r| (r.context_id, r.cpd)).collect())
        }
        (None, Some(p)) => {
            let records = load_generations(run, p)?;
            let (cpds, failed) = estimate_all(&records);
            if !failed.is_empty() {
                log::warn!("{} contexts have no accepted generation", failed.len());
            }
            Ok(cpds)
        }
        (None, None) => Err(UsageError("one of --model-cpds or --generations is required".into()).into()),
    }
}
