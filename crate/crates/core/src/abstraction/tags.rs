use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cpd::{mle, tvd, Cpd, WordCounts};
use crate::error::{Error, Result};

/// The coarse universal part-of-speech tagset, with punctuation as its own
/// category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum UniversalTag {
    Punct,
    Adj,
    Adp,
    Adv,
    Conj,
    Det,
    Noun,
    Num,
    Pron,
    Prt,
    Verb,
}

impl UniversalTag {
    pub const ALL: [UniversalTag; 11] = [
        UniversalTag::Punct,
        UniversalTag::Adj,
        UniversalTag::Adp,
        UniversalTag::Adv,
        UniversalTag::Conj,
        UniversalTag::Det,
        UniversalTag::Noun,
        UniversalTag::Num,
        UniversalTag::Pron,
        UniversalTag::Prt,
        UniversalTag::Verb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UniversalTag::Punct => "PUNCT",
            UniversalTag::Adj => "ADJ",
            UniversalTag::Adp => "ADP",
            UniversalTag::Adv => "ADV",
            UniversalTag::Conj => "CONJ",
            UniversalTag::Det => "DET",
            UniversalTag::Noun => "NOUN",
            UniversalTag::Num => "NUM",
            UniversalTag::Pron => "PRON",
            UniversalTag::Prt => "PRT",
            UniversalTag::Verb => "VERB",
        }
    }
}

impl fmt::Display for UniversalTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UniversalTag {
    type Err = Error;

    /// Accepts the tag names plus common aliases from other universal
    /// tagset versions (`.`, `CCONJ`, `SCONJ`, `PART`, `AUX`, `PROPN`, `X`...).
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "PUNCT" | "." | "SYM" => UniversalTag::Punct,
            "ADJ" => UniversalTag::Adj,
            "ADP" => UniversalTag::Adp,
            "ADV" => UniversalTag::Adv,
            "CONJ" | "CCONJ" | "SCONJ" => UniversalTag::Conj,
            "DET" => UniversalTag::Det,
            "NOUN" | "PROPN" | "X" | "INTJ" => UniversalTag::Noun,
            "NUM" => UniversalTag::Num,
            "PRON" => UniversalTag::Pron,
            "PRT" | "PART" => UniversalTag::Prt,
            "VERB" | "AUX" => UniversalTag::Verb,
            other => return Err(Error::Tagging(vec![format!("unknown tag `{other}`")])),
        })
    }
}

/// Who produced the tagged word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagSource {
    Human,
    Model,
    OracleA,
    OracleB,
    /// The last word of the context itself.
    Context,
}

impl TagSource {
    pub fn as_str(self) -> &'static str {
        match self {
            TagSource::Human => "human",
            TagSource::Model => "model",
            TagSource::OracleA => "oracle_a",
            TagSource::OracleB => "oracle_b",
            TagSource::Context => "context",
        }
    }
}

impl FromStr for TagSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "human" => TagSource::Human,
            "model" => TagSource::Model,
            "oracle_a" => TagSource::OracleA,
            "oracle_b" => TagSource::OracleB,
            "context" => TagSource::Context,
            other => return Err(Error::Tagging(vec![format!("unknown source `{other}`")])),
        })
    }
}

/// One tag multiset per (context, source).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagAssignment {
    pub context_id: String,
    pub source: TagSource,
    pub tags: BTreeMap<UniversalTag, u64>,
}

impl TagAssignment {
    fn counts(&self) -> WordCounts {
        self.tags.iter().map(|(t, c)| (t.as_str().to_string(), *c)).fold(WordCounts::new(), |mut wc, (t, c)| {
            wc.add(t, c);
            wc
        })
    }
}

pub trait Tagger: Sync {
    fn tag(&self, context_id: &str, source: TagSource, context_text: &str, word: &str) -> Result<UniversalTag>;
}

/// Annotations read from `context_id \t source \t word \t tag` rows.
#[derive(Debug, Clone, Default)]
pub struct ExternalTagger {
    entries: HashMap<(String, String, String), UniversalTag>,
}

impl ExternalTagger {
    pub fn from_tsv<R: Read>(mut raw: R) -> Result<Self> {
        let mut text = String::new();
        raw.read_to_string(&mut text)?;
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected 4 tab-separated columns, found {}", cols.len()),
                });
            }
            let tag = cols[3].parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("unknown tag `{}`", cols[3]),
            })?;
            entries.insert((cols[0].to_string(), cols[1].to_string(), cols[2].to_string()), tag);
        }
        Ok(ExternalTagger { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Tagger for ExternalTagger {
    fn tag(&self, context_id: &str, source: TagSource, _context_text: &str, word: &str) -> Result<UniversalTag> {
        let key = (context_id.to_string(), source.as_str().to_string(), word.to_string());
        self.entries
            .get(&key)
            .copied()
            .ok_or_else(|| Error::Tagging(vec![format!("{context_id}\t{}\t{word}", source.as_str())]))
    }
}

const DETERMINERS: &[&str] = &[
    "the", "a", "an", "this", "that", "these", "those", "every", "each", "some", "any", "no", "all",
    "both", "either", "neither", "another", "such", "what", "which", "whose",
];
const ADPOSITIONS: &[&str] = &[
    "of", "in", "on", "at", "by", "for", "with", "from", "into", "onto", "about", "above", "across",
    "after", "against", "along", "among", "around", "before", "behind", "below", "beneath", "beside",
    "between", "beyond", "during", "except", "inside", "near", "outside", "over", "past", "since",
    "through", "throughout", "toward", "towards", "under", "underneath", "until", "upon", "within",
    "without", "via", "per", "despite", "like", "than", "as",
];
const PRONOUNS: &[&str] = &[
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them", "my", "your",
    "his", "its", "our", "their", "mine", "yours", "hers", "ours", "theirs", "myself", "yourself",
    "himself", "herself", "itself", "ourselves", "themselves", "who", "whom", "someone", "anyone",
    "everyone", "nobody", "something", "anything", "everything", "nothing", "one",
];
const CONJUNCTIONS: &[&str] = &[
    "and", "or", "but", "nor", "yet", "so", "because", "although", "though", "while", "whereas",
    "if", "unless", "whether", "when", "where", "once",
];
const PARTICLES: &[&str] = &["to", "not", "n't", "up", "off", "out", "'s"];
const NUMBERS: &[&str] = &[
    "zero", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    "twelve", "twenty", "thirty", "forty", "fifty", "hundred", "thousand", "million", "billion",
];
const VERBS: &[&str] = &[
    "is", "are", "was", "were", "be", "been", "being", "am", "have", "has", "had", "do", "does",
    "did", "will", "would", "can", "could", "shall", "should", "may", "might", "must", "get", "got",
    "make", "made", "go", "went", "gone", "say", "said", "see", "saw", "seen", "take", "took",
    "know", "knew", "think", "thought", "come", "came", "become", "became", "find", "found",
    "give", "gave", "show", "showed", "help", "use", "need", "want", "seem", "keep", "let",
];
const ADVERBS: &[&str] = &[
    "very", "also", "just", "only", "even", "still", "already", "often", "never", "always",
    "sometimes", "now", "then", "here", "there", "too", "again", "however", "soon", "almost",
    "rather", "quite", "perhaps", "ever", "more", "most", "less", "least", "well", "how", "why",
];
const ADJECTIVES: &[&str] = &[
    "good", "new", "first", "last", "long", "great", "little", "own", "other", "old", "right",
    "big", "high", "different", "small", "large", "next", "early", "young", "important", "few",
    "public", "bad", "same", "able", "many", "much", "human", "local", "whole", "real", "best",
];

/// Closed-class lexicon, then suffix rules, then NOUN.
#[derive(Debug, Clone, Copy, Default)]
pub struct BaselineTagger;

impl BaselineTagger {
    pub fn tag_word(word: &str) -> UniversalTag {
        let w = word.trim().to_lowercase();
        if w.is_empty() || w.chars().all(|c| !c.is_alphanumeric()) {
            return UniversalTag::Punct;
        }
        if w.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',') {
            return UniversalTag::Num;
        }
        let lex: [(&[&str], UniversalTag); 9] = [
            (DETERMINERS, UniversalTag::Det),
            (PARTICLES, UniversalTag::Prt),
            (ADPOSITIONS, UniversalTag::Adp),
            (PRONOUNS, UniversalTag::Pron),
            (CONJUNCTIONS, UniversalTag::Conj),
            (NUMBERS, UniversalTag::Num),
            (VERBS, UniversalTag::Verb),
            (ADVERBS, UniversalTag::Adv),
            (ADJECTIVES, UniversalTag::Adj),
        ];
        for (list, tag) in lex {
            if list.contains(&w.as_str()) {
                return tag;
            }
        }
        let n = w.chars().count();
        let ends = |s: &str| w.ends_with(s) && n > s.len() + 2;
        if ends("ly") {
            UniversalTag::Adv
        } else if ends("ing") || ends("ed") || ends("ize") || ends("ise") || ends("ate") {
            UniversalTag::Verb
        } else if ["ous", "ful", "able", "ible", "ive", "al", "ic", "less", "ish", "ary"]
            .iter()
            .any(|s| ends(s))
        {
            UniversalTag::Adj
        } else {
            UniversalTag::Noun
        }
    }
}

impl Tagger for BaselineTagger {
    fn tag(&self, _context_id: &str, _source: TagSource, _context_text: &str, word: &str) -> Result<UniversalTag> {
        Ok(Self::tag_word(word))
    }
}

/// The final token of a context: trailing punctuation is its own token.
pub fn last_context_token(context_text: &str) -> Option<String> {
    let last = context_text.split_whitespace().last()?;
    let trimmed = last.trim_end_matches(|c: char| !c.is_alphanumeric());
    if trimmed.len() < last.len() {
        Some(last[trimmed.len()..].to_string())
    } else {
        Some(last.to_string())
    }
}

/// Tags the last token of a context.
pub fn tag_last_word(tagger: &dyn Tagger, context_id: &str, context_text: &str) -> Result<UniversalTag> {
    let token = last_context_token(context_text)
        .ok_or_else(|| Error::Tagging(vec![format!("{context_id}: empty context")]))?;
    tagger.tag(context_id, TagSource::Context, context_text, &token)
}

/// Tags every word of a count table; all missing annotations are reported
/// together.
pub fn tag_counts(
    tagger: &dyn Tagger,
    context_id: &str,
    source: TagSource,
    context_text: &str,
    counts: &WordCounts,
) -> Result<TagAssignment> {
    let mut tags = BTreeMap::new();
    let mut missing = Vec::new();
    for (w, c) in counts.iter() {
        match tagger.tag(context_id, source, context_text, w) {
            Ok(t) => *tags.entry(t).or_insert(0) += c,
            Err(Error::Tagging(m)) => missing.extend(m),
            Err(e) => return Err(e),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Tagging(missing));
    }
    Ok(TagAssignment {
        context_id: context_id.to_string(),
        source,
        tags,
    })
}

/// Collapses a cpd onto tags by summing word probabilities.
pub fn tag_cpd(tagger: &dyn Tagger, context_id: &str, source: TagSource, context_text: &str, p: &Cpd) -> Result<Cpd> {
    let mut map = BTreeMap::new();
    let mut missing = Vec::new();
    for w in p.words() {
        match tagger.tag(context_id, source, context_text, w) {
            Ok(t) => {
                map.insert(w.to_string(), t);
            }
            Err(Error::Tagging(m)) => missing.extend(m),
            Err(e) => return Err(e),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Tagging(missing));
    }
    Ok(p.repartition(|w| map[w].as_str().to_string()))
}

pub fn tvd_syn(human: &TagAssignment, model: &TagAssignment) -> Result<f64> {
    let (h, m) = (human.counts(), model.counts());
    if h.total() == 0 || m.total() == 0 {
        return Err(Error::Metric("syntactic TVD needs tags on both sides".into()));
    }
    Ok(tvd(&mle(&h)?, &mle(&m)?))
}
