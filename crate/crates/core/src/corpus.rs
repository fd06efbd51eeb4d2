//! Multi-reference next-word datasets: ingestion, canonical form, validation.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Read};

use serde::{Deserialize, Serialize};

use crate::cpd::{mle, normalize_with, Cpd, Normalization, WordCounts};
use crate::error::{Error, Result};
use crate::sampler::first_word_with;
use crate::util::digest_hex;

/// One passage prefix together with the word that actually followed it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub context_id: String,
    pub passage_id: String,
    pub word_number: u32,
    pub context_text: String,
    pub corpus_word: String,
}

impl Context {
    /// Number of whitespace-separated words in the prefix.
    pub fn length_words(&self) -> usize {
        self.context_text.split_whitespace().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub word: String,
    pub count: u64,
}

/// The multiset of human answers for one context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseSet {
    pub context_id: String,
    pub responses: Vec<Response>,
}

impl ResponseSet {
    pub fn from_counts(context_id: impl Into<String>, counts: &WordCounts) -> Self {
        ResponseSet {
            context_id: context_id.into(),
            responses: counts
                .iter()
                .map(|(w, c)| Response {
                    word: w.to_string(),
                    count: c,
                })
                .collect(),
        }
    }

    pub fn counts(&self) -> WordCounts {
        let mut counts = WordCounts::new();
        for r in &self.responses {
            counts.add(r.word.clone(), r.count);
        }
        counts
    }

    pub fn total(&self) -> u64 {
        self.responses.iter().map(|r| r.count).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_digest: String,
    pub options: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub contexts: Vec<Context>,
    pub response_sets: BTreeMap<String, ResponseSet>,
    pub provenance: Provenance,
}

/// Record layout of the canonical JSONL form.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CanonicalRecord {
    context_id: String,
    passage_id: String,
    word_number: u32,
    context_text: String,
    corpus_word: String,
    responses: Vec<Response>,
    #[serde(default, skip_serializing_if = "Normalization::is_folded")]
    normalization: Normalization,
}

/// Orders passage ids numerically when both parse as integers.
fn passage_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        _ => a.cmp(b),
    }
}

fn context_order(a: &Context, b: &Context) -> Ordering {
    passage_order(&a.passage_id, &b.passage_id)
        .then(a.word_number.cmp(&b.word_number))
        .then_with(|| a.context_id.cmp(&b.context_id))
}

impl Dataset {
    /// How the words were normalized at ingestion.
    pub fn normalization(&self) -> Normalization {
        match self.provenance.options.get("normalization").map(String::as_str) {
            Some("exact") => Normalization::Exact,
            _ => Normalization::Folded,
        }
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn context(&self, context_id: &str) -> Option<&Context> {
        self.contexts.iter().find(|c| c.context_id == context_id)
    }

    pub fn responses(&self, context_id: &str) -> Option<&ResponseSet> {
        self.response_sets.get(context_id)
    }

    /// Full-population human distribution for a context.
    pub fn human_cpd(&self, context_id: &str) -> Result<Cpd> {
        let rs = self
            .responses(context_id)
            .ok_or_else(|| Error::Input(format!("no responses for {context_id}")))?;
        mle(&rs.counts())
    }

    fn sort(&mut self) {
        self.contexts.sort_by(context_order);
    }

    /// Serializes to the canonical JSONL form, one context per line.
    pub fn emit_canonical_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for c in &self.contexts {
            let responses = self
                .response_sets
                .get(&c.context_id)
                .map(|rs| rs.responses.clone())
                .unwrap_or_default();
            let record = CanonicalRecord {
                context_id: c.context_id.clone(),
                passage_id: c.passage_id.clone(),
                word_number: c.word_number,
                context_text: c.context_text.clone(),
                corpus_word: c.corpus_word.clone(),
                responses,
                normalization: self.normalization(),
            };
            out.push_str(&serde_json::to_string(&record)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Provenance options, noting the normalization only when it is not the
/// default so folded datasets keep their historical form.
fn normalization_options<'a>(
    mode: Normalization,
    base: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> BTreeMap<String, String> {
    let mut m: BTreeMap<String, String> = base.into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    if !mode.is_folded() {
        m.insert("normalization".into(), mode.as_str().into());
    }
    m
}

fn check_context(c: &Context, mode: Normalization) -> Result<()> {
    if c.context_text.trim().is_empty() {
        return Err(Error::Integrity(format!("{}: empty context text", c.context_id)));
    }
    if normalize_with(&c.corpus_word, mode).is_none() {
        return Err(Error::Integrity(format!(
            "{}: corpus word `{}` normalizes to nothing",
            c.context_id, c.corpus_word
        )));
    }
    if c.word_number == 0 {
        return Err(Error::Integrity(format!("{}: word_number must be >= 1", c.context_id)));
    }
    Ok(())
}

/// Parses the canonical JSONL dataset form.
pub fn parse_canonical_jsonl<R: Read>(raw: R) -> Result<Dataset> {
    let mut bytes = Vec::new();
    let mut reader = std::io::BufReader::new(raw);
    reader.read_to_end(&mut bytes)?;
    let mut contexts = Vec::new();
    let mut response_sets = BTreeMap::new();
    let mut dataset_mode = None;
    for (i, line) in bytes.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CanonicalRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let context = Context {
            context_id: rec.context_id.clone(),
            passage_id: rec.passage_id,
            word_number: rec.word_number,
            context_text: rec.context_text,
            corpus_word: rec.corpus_word,
        };
        let mode = *dataset_mode.get_or_insert(rec.normalization);
        if mode != rec.normalization {
            return Err(Error::Integrity(format!("line {}: mixed word normalization", i + 1)));
        }
        check_context(&context, mode)?;
        let mut counts = WordCounts::new();
        for r in rec.responses {
            if r.count == 0 {
                return Err(Error::Integrity(format!(
                    "line {}: response `{}` has count 0",
                    i + 1,
                    r.word
                )));
            }
            let word = normalize_with(&r.word, mode).ok_or_else(|| {
                Error::Integrity(format!("line {}: response `{}` is empty", i + 1, r.word))
            })?;
            counts.add(word, r.count);
        }
        if counts.is_empty() {
            return Err(Error::Integrity(format!(
                "line {}: context {} has no responses",
                i + 1,
                rec.context_id
            )));
        }
        if response_sets
            .insert(
                rec.context_id.clone(),
                ResponseSet::from_counts(rec.context_id.clone(), &counts),
            )
            .is_some()
        {
            return Err(Error::Integrity(format!("duplicate context_id {}", rec.context_id)));
        }
        contexts.push(context);
    }
    if contexts.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut d = Dataset {
        contexts,
        response_sets,
        provenance: Provenance {
            source_digest: digest_hex(&bytes),
            options: normalization_options(dataset_mode.unwrap_or_default(), [("format", "jsonl")]),
        },
    };
    d.sort();
    Ok(d)
}

/// Which header names hold which field in a delimited response table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub passage: String,
    pub word_number: String,
    pub context: String,
    pub target: String,
    pub response: String,
    pub count: Option<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: u8,
    #[serde(default)]
    pub normalization: Normalization,
}

fn default_delimiter() -> u8 {
    b','
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            passage: "passage_id".into(),
            word_number: "word_number".into(),
            context: "context".into(),
            target: "word".into(),
            response: "response".into(),
            count: None,
            delimiter: b',',
            normalization: Normalization::Folded,
        }
    }
}

impl ColumnMapping {
    fn options(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::from([
            ("format".to_string(), "csv".to_string()),
            ("col_passage".to_string(), self.passage.clone()),
            ("col_wordnum".to_string(), self.word_number.clone()),
            ("col_context".to_string(), self.context.clone()),
            ("col_target".to_string(), self.target.clone()),
            ("col_response".to_string(), self.response.clone()),
            ("delimiter".to_string(), (self.delimiter as char).to_string()),
        ]);
        if let Some(c) = &self.count {
            m.insert("col_count".into(), c.clone());
        }
        if !self.normalization.is_folded() {
            m.insert("normalization".into(), self.normalization.as_str().into());
        }
        m
    }
}

/// Counts gathered while ingesting a response table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows_read: u64,
    pub responses_kept: u64,
    pub responses_dropped_empty: u64,
    pub contexts: usize,
    pub contexts_without_responses: Vec<String>,
}

struct Pending {
    context: Context,
    counts: WordCounts,
}

/// Ingests a delimited table with one row per human answer (or answer plus
/// count). Answers are cut to their first word and normalized.
pub fn parse_provo_csv<R: Read>(raw: R, mapping: &ColumnMapping) -> Result<(Dataset, IngestSummary)> {
    let mut bytes = Vec::new();
    std::io::BufReader::new(raw).read_to_end(&mut bytes)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(mapping.delimiter)
        .flexible(true)
        .from_reader(bytes.as_slice());
    let mode = mapping.normalization;
    let headers = reader.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(name.to_string()))
    };
    let i_passage = find(&mapping.passage)?;
    let i_wordnum = find(&mapping.word_number)?;
    let i_context = find(&mapping.context)?;
    let i_target = find(&mapping.target)?;
    let i_response = find(&mapping.response)?;
    let i_count = mapping.count.as_deref().map(find).transpose()?;

    let mut summary = IngestSummary::default();
    let mut pending: HashMap<(String, u32), Pending> = HashMap::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        // Header is line 1.
        let line = row_idx + 2;
        summary.rows_read += 1;
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let passage_id = field(i_passage).to_string();
        let word_number: u32 = field(i_wordnum).parse().map_err(|_| Error::Parse {
            line,
            message: format!("word number `{}` is not an integer", field(i_wordnum)),
        })?;
        let context_text = record.get(i_context).unwrap_or("").to_string();
        let corpus_word = field(i_target).to_string();
        let count: u64 = match i_count {
            Some(i) => field(i).parse().map_err(|_| Error::Parse {
                line,
                message: format!("count `{}` is not an integer", field(i)),
            })?,
            None => 1,
        };
        let key = (passage_id.clone(), word_number);
        let entry = match pending.get_mut(&key) {
            Some(p) => {
                if p.context.context_text.trim() != context_text.trim() {
                    return Err(Error::Integrity(format!(
                        "passage {passage_id} word {word_number}: conflicting context text at line {line}"
                    )));
                }
                if normalize_with(&p.context.corpus_word, mode) != normalize_with(&corpus_word, mode) {
                    return Err(Error::Integrity(format!(
                        "passage {passage_id} word {word_number}: conflicting corpus word at line {line}"
                    )));
                }
                p
            }
            None => {
                let context = Context {
                    context_id: format!("{passage_id}-{word_number}"),
                    passage_id: passage_id.clone(),
                    word_number,
                    context_text: context_text.trim().to_string(),
                    corpus_word: normalize_with(&corpus_word, mode).unwrap_or_default(),
                };
                check_context(&context, mode).map_err(|e| match e {
                    Error::Integrity(m) => Error::Integrity(format!("line {line}: {m}")),
                    other => other,
                })?;
                pending.entry(key).or_insert(Pending {
                    context,
                    counts: WordCounts::new(),
                })
            }
        };
        match first_word_with(field(i_response), mode) {
            Some(word) if count > 0 => {
                entry.counts.add(word, count);
                summary.responses_kept += count;
            }
            _ => summary.responses_dropped_empty += 1,
        }
    }

    let mut contexts = Vec::new();
    let mut response_sets = BTreeMap::new();
    for (_, p) in pending {
        if p.counts.is_empty() {
            summary.contexts_without_responses.push(p.context.context_id);
            continue;
        }
        response_sets.insert(
            p.context.context_id.clone(),
            ResponseSet::from_counts(p.context.context_id.clone(), &p.counts),
        );
        contexts.push(p.context);
    }
    summary.contexts_without_responses.sort();
    if contexts.is_empty() {
        return Err(Error::EmptyDataset);
    }
    summary.contexts = contexts.len();
    let mut d = Dataset {
        contexts,
        response_sets,
        provenance: Provenance {
            source_digest: digest_hex(&bytes),
            options: mapping.options(),
        },
    };
    d.sort();
    Ok((d, summary))
}

/// A broken dataset invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Breach {
    OrphanResponses { context_id: String },
    MissingResponses { context_id: String },
    DuplicateContextId { context_id: String },
    EmptyContextText { context_id: String },
    InvalidCorpusWord { context_id: String },
    ZeroCount { context_id: String, word: String },
    DuplicateWord { context_id: String, word: String },
    MismatchedKey { key: String, context_id: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_contexts: usize,
    pub per_context_totals: Vec<(String, u64)>,
    pub min_responses: Option<u64>,
    pub median_responses: Option<f64>,
    pub max_responses: Option<u64>,
    pub breaches: Vec<Breach>,
}

/// Reports response totals and every broken invariant. Never fails.
pub fn validate_dataset(d: &Dataset) -> ValidationReport {
    let mut breaches = Vec::new();
    let mut seen = BTreeSet::new();
    let mut totals = Vec::new();
    for c in &d.contexts {
        if !seen.insert(c.context_id.as_str()) {
            breaches.push(Breach::DuplicateContextId {
                context_id: c.context_id.clone(),
            });
        }
        if c.context_text.trim().is_empty() {
            breaches.push(Breach::EmptyContextText {
                context_id: c.context_id.clone(),
            });
        }
        if normalize_with(&c.corpus_word, d.normalization()).is_none() {
            breaches.push(Breach::InvalidCorpusWord {
                context_id: c.context_id.clone(),
            });
        }
        match d.response_sets.get(&c.context_id) {
            Some(rs) if rs.total() > 0 => totals.push((c.context_id.clone(), rs.total())),
            _ => breaches.push(Breach::MissingResponses {
                context_id: c.context_id.clone(),
            }),
        }
    }
    for (key, rs) in &d.response_sets {
        if key != &rs.context_id {
            breaches.push(Breach::MismatchedKey {
                key: key.clone(),
                context_id: rs.context_id.clone(),
            });
        }
        if !seen.contains(key.as_str()) {
            breaches.push(Breach::OrphanResponses {
                context_id: key.clone(),
            });
        }
        let mut words = BTreeSet::new();
        for r in &rs.responses {
            if r.count == 0 {
                breaches.push(Breach::ZeroCount {
                    context_id: key.clone(),
                    word: r.word.clone(),
                });
            }
            if !words.insert(r.word.as_str()) {
                breaches.push(Breach::DuplicateWord {
                    context_id: key.clone(),
                    word: r.word.clone(),
                });
            }
        }
    }
    let mut sorted: Vec<u64> = totals.iter().map(|(_, t)| *t).collect();
    sorted.sort_unstable();
    let median = if sorted.is_empty() {
        None
    } else {
        let m = sorted.len() / 2;
        Some(if sorted.len() % 2 == 0 {
            (sorted[m - 1] + sorted[m]) as f64 / 2.0
        } else {
            sorted[m] as f64
        })
    };
    ValidationReport {
        n_contexts: d.contexts.len(),
        min_responses: sorted.first().copied(),
        median_responses: median,
        max_responses: sorted.last().copied(),
        per_context_totals: totals,
        breaches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mapping() -> ColumnMapping {
        ColumnMapping {
            passage: "Text_ID".into(),
            word_number: "Word_Number".into(),
            context: "Context".into(),
            target: "Word".into(),
            response: "Response".into(),
            count: None,
            delimiter: b',',
            normalization: Normalization::Folded,
        }
    }

    #[test]
    fn minimal_table() {
        let csv = "Text_ID,Word_Number,Context,Word,Response\n1,2,There,is,the\n";
        let (d, s) = parse_provo_csv(csv.as_bytes(), &mapping()).unwrap();
        assert_eq!(d.len(), 1);
        let rs = d.responses("1-2").unwrap();
        assert_eq!(rs.responses, vec![Response { word: "the".into(), count: 1 }]);
        assert_eq!(s.responses_kept, 1);
    }

    #[test]
    fn case_variants_aggregate() {
        let csv = "Text_ID,Word_Number,Context,Word,Response\n1,2,Hi,x,The\n1,2,Hi,x,the\n";
        let (d, _) = parse_provo_csv(csv.as_bytes(), &mapping()).unwrap();
        assert_eq!(d.responses("1-2").unwrap().counts().get("the"), 2);
    }

    #[test]
    fn exact_mode_keeps_case_and_survives_round_trip() {
        let mut m = mapping();
        m.normalization = Normalization::Exact;
        let csv = "Text_ID,Word_Number,Context,Word,Response\n1,2,Hi,X,The\n1,2,Hi,X,the\n";
        let (d, _) = parse_provo_csv(csv.as_bytes(), &m).unwrap();
        let counts = d.responses("1-2").unwrap().counts();
        assert_eq!((counts.get("The"), counts.get("the")), (1, 1));
        assert_eq!(d.context("1-2").unwrap().corpus_word, "X");
        let text = d.emit_canonical_jsonl().unwrap();
        assert!(text.contains(r#""normalization":"exact""#));
        let back = parse_canonical_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back.normalization(), Normalization::Exact);
        assert_eq!(back.responses("1-2").unwrap().counts(), counts);
        // Folded datasets carry no marker.
        let (f, _) = parse_provo_csv(csv.as_bytes(), &mapping()).unwrap();
        assert!(!f.emit_canonical_jsonl().unwrap().contains("normalization"));
    }

    #[test]
    fn empty_and_multiword_answers() {
        let csv = "Text_ID,Word_Number,Context,Word,Response\n\
                   1,2,Hi,x,\n1,2,Hi,x,  \n1,2,Hi,x,New York\n1,2,Hi,x,...\n";
        let (d, s) = parse_provo_csv(csv.as_bytes(), &mapping()).unwrap();
        assert_eq!(s.responses_dropped_empty, 3);
        assert_eq!(s.rows_read, 4);
        assert_eq!(d.responses("1-2").unwrap().counts().get("new"), 1);
    }

    #[test]
    fn count_column() {
        let mut m = mapping();
        m.count = Some("N".into());
        let csv = "Text_ID,Word_Number,Context,Word,Response,N\n1,2,Hi,x,a,3\n1,2,Hi,x,b,1\n";
        let (d, s) = parse_provo_csv(csv.as_bytes(), &m).unwrap();
        assert_eq!(d.responses("1-2").unwrap().total(), 4);
        assert_eq!(s.responses_kept, 4);
    }

    #[test]
    fn schema_and_integrity_errors() {
        let csv = "Text_ID,Word_Number,Context,Word\n1,2,Hi,x\n";
        match parse_provo_csv(csv.as_bytes(), &mapping()) {
            Err(Error::Schema(col)) => assert_eq!(col, "Response"),
            other => panic!("unexpected {other:?}"),
        }
        let csv = "Text_ID,Word_Number,Context,Word,Response\n1,2,Hi,x,a\n1,2,Hello,x,b\n";
        assert!(matches!(
            parse_provo_csv(csv.as_bytes(), &mapping()),
            Err(Error::Integrity(_))
        ));
        let csv = "Text_ID,Word_Number,Context,Word,Response\n1,2,Hi,x,\n";
        assert!(matches!(
            parse_provo_csv(csv.as_bytes(), &mapping()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn jsonl_zero_count_rejected() {
        let line = r#"{"context_id":"c","passage_id":"1","word_number":1,"context_text":"A","corpus_word":"b","responses":[{"word":"x","count":0}]}"#;
        assert!(matches!(
            parse_canonical_jsonl(line.as_bytes()),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn jsonl_malformed_line_number() {
        let good = r#"{"context_id":"c","passage_id":"1","word_number":1,"context_text":"A","corpus_word":"b","responses":[{"word":"x","count":1}]}"#;
        let raw = format!("{good}\n{{not json\n");
        match parse_canonical_jsonl(raw.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn jsonl_sorted_by_passage_and_position() {
        let rec = |id: &str, p: &str, n: u32| {
            format!(
                r#"{{"context_id":"{id}","passage_id":"{p}","word_number":{n},"context_text":"A","corpus_word":"b","responses":[{{"word":"x","count":1}}]}}"#
            )
        };
        let raw = [rec("c", "10", 1), rec("b", "2", 3), rec("a", "2", 2)].join("\n");
        let d = parse_canonical_jsonl(raw.as_bytes()).unwrap();
        let order: Vec<_> = d.contexts.iter().map(|c| c.context_id.as_str()).collect();
        assert_eq!(order, ["a", "b", "c"]);
    }

    #[test]
    fn validation_reports() {
        let empty = validate_dataset(&Dataset::default());
        assert_eq!(empty.n_contexts, 0);
        assert!(empty.breaches.is_empty());

        let mut d = Dataset::default();
        d.response_sets.insert(
            "ghost".into(),
            ResponseSet {
                context_id: "ghost".into(),
                responses: vec![Response { word: "a".into(), count: 1 }],
            },
        );
        let r = validate_dataset(&d);
        assert_eq!(
            r.breaches,
            vec![Breach::OrphanResponses { context_id: "ghost".into() }]
        );
    }
}
