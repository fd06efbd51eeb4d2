use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{read_generations, GenerationRecord, PromptMode};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) struct RunKey {
    context_id: String,
    model_id: String,
    prompt_mode: PromptMode,
    temperature_bits: u64,
    top_p_bits: Option<u64>,
}

impl RunKey {
    pub(crate) fn new(
        context_id: &str,
        model_id: &str,
        prompt_mode: PromptMode,
        temperature: f64,
        top_p: Option<f64>,
    ) -> Self {
        RunKey {
            context_id: context_id.to_string(),
            model_id: model_id.to_string(),
            prompt_mode,
            temperature_bits: temperature.to_bits(),
            top_p_bits: top_p.map(f64::to_bits),
        }
    }

    fn of(r: &GenerationRecord) -> Self {
        RunKey::new(&r.context_id, &r.model_id, r.prompt_mode, r.temperature, r.top_p)
    }
}

/// Append-only store of every generation attempt, optionally backed by a
/// JSONL file. Reopening the file restores all earlier attempts.
#[derive(Debug, Default)]
pub struct GenerationCache {
    path: Option<PathBuf>,
    file: Option<File>,
    by_key: HashMap<RunKey, Vec<GenerationRecord>>,
}

impl GenerationCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let existing = match std::fs::read_to_string(&path) {
            Ok(text) => read_generations(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        let mut cache = GenerationCache {
            path: Some(path),
            file: Some(file),
            by_key: HashMap::new(),
        };
        cache.index(existing);
        Ok(cache)
    }

    pub fn from_records(records: Vec<GenerationRecord>) -> Self {
        let mut cache = Self::in_memory();
        cache.index(records);
        cache
    }

    fn index(&mut self, records: Vec<GenerationRecord>) {
        for r in records {
            self.by_key.entry(RunKey::of(&r)).or_default().push(r);
        }
        for v in self.by_key.values_mut() {
            v.sort_by_key(|r| r.sample_index);
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub(crate) fn attempts(&self, key: &RunKey) -> &[GenerationRecord] {
        self.by_key.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.by_key.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn append(&mut self, records: &[GenerationRecord]) -> Result<()> {
        if let Some(f) = self.file.as_mut() {
            let mut buf = String::new();
            for r in records {
                buf.push_str(&serde_json::to_string(r)?);
                buf.push('\n');
            }
            f.write_all(buf.as_bytes())?;
            f.flush()?;
        }
        for r in records {
            let list = self.by_key.entry(RunKey::of(r)).or_default();
            list.push(r.clone());
        }
        Ok(())
    }
}
