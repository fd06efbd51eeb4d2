//! Minimal byte-level BPE, enough to find the first token of a word.
//!
//! Loads the standard two-file layout (`merges.txt` with one pair per line,
//! `vocab.json` mapping token to id), pre-splits text with the GPT-2 pattern
//! and applies merges lowest-rank first until no ranked pair remains.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};

/// The reversible byte-to-character table of byte-level BPE: printable
/// Latin-1 bytes map to themselves, the rest to code points from 256 up.
pub fn byte_alphabet() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut next = 256u32;
    for b in 0..=255u8 {
        let printable = matches!(b, b'!'..=b'~' | 0xA1..=0xAC | 0xAE..=0xFF);
        table[b as usize] = if printable {
            b as char
        } else {
            let c = char::from_u32(next).expect("valid code point");
            next += 1;
            c
        };
    }
    table
}

#[derive(Debug, Clone)]
pub struct BpeVocab {
    ranks: HashMap<(String, String), usize>,
    tokens: Option<HashSet<String>>,
    alphabet: [char; 256],
}

impl BpeVocab {
    /// Builds a vocabulary from ordered merge pairs. Duplicate pairs are a
    /// vocab error.
    pub fn from_merges(merges: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut ranks = HashMap::new();
        for (rank, pair) in merges.into_iter().enumerate() {
            if ranks.contains_key(&pair) {
                return Err(Error::Vocab(format!("duplicate merge `{} {}`", pair.0, pair.1)));
            }
            ranks.insert(pair, rank);
        }
        Ok(BpeVocab {
            ranks,
            tokens: None,
            alphabet: byte_alphabet(),
        })
    }

    /// Parses `merges.txt` text; `#version` headers and blank lines are skipped.
    pub fn parse_merges(text: &str) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.starts_with("#version") || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                    out.push((a.to_string(), b.to_string()))
                }
                _ => {
                    return Err(Error::Vocab(format!("line {}: malformed merge `{line}`", i + 1)))
                }
            }
        }
        Ok(out)
    }

    /// Loads merges plus an optional token→id JSON map.
    pub fn load(merges_text: &str, vocab_json: Option<&str>) -> Result<Self> {
        let mut vocab = Self::from_merges(Self::parse_merges(merges_text)?)?;
        if let Some(json) = vocab_json {
            let map: BTreeMap<String, u64> = serde_json::from_str(json)
                .map_err(|e| Error::Vocab(format!("vocabulary JSON: {e}")))?;
            vocab.tokens = Some(map.into_keys().collect());
        }
        Ok(vocab)
    }

    pub fn n_merges(&self) -> usize {
        self.ranks.len()
    }

    fn symbol(&self, byte: u8) -> Result<String> {
        let s = self.alphabet[byte as usize].to_string();
        match &self.tokens {
            Some(t) if !t.contains(&s) => Err(Error::Vocab(format!("byte {byte:#04x} has no vocabulary symbol"))),
            _ => Ok(s),
        }
    }

    /// Applies merges to one pre-token, returning its tokens.
    pub fn bpe(&self, piece: &str) -> Result<Vec<String>> {
        let mut symbols: Vec<String> = piece.bytes().map(|b| self.symbol(b)).collect::<Result<_>>()?;
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|r| (*r, w)))
                .min_by_key(|(r, _)| *r)
                .map(|(_, w)| (w[0].clone(), w[1].clone()));
            let Some((a, b)) = best else { break };
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == a && symbols[i + 1] == b {
                    merged.push(format!("{a}{b}"));
                    i += 2;
                } else {
                    merged.push(symbols[i].clone());
                    i += 1;
                }
            }
            symbols = merged;
        }
        if let Some(t) = &self.tokens {
            if let Some(s) = symbols.iter().find(|s| !t.contains(*s)) {
                return Err(Error::Vocab(format!("token `{s}` missing from vocabulary")));
            }
        }
        Ok(symbols)
    }
}

fn pretoken_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?:'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+)")
            .expect("valid pattern")
    })
}

/// The first pre-token of `text` under the GPT-2 split pattern. Whitespace
/// runs leave their last character to prefix the following word.
pub fn first_pretoken(text: &str) -> Option<&str> {
    if text.is_empty() {
        return None;
    }
    if let Some(m) = pretoken_pattern().find(text) {
        return Some(m.as_str());
    }
    // Whitespace run: `\s+(?!\S)` then `\s+`.
    let run_end = text
        .char_indices()
        .find(|(_, c)| !c.is_whitespace())
        .map_or(text.len(), |(i, _)| i);
    if run_end == text.len() {
        return Some(text);
    }
    let last_ws = text[..run_end].char_indices().last().map_or(0, |(i, _)| i);
    Some(if last_ws > 0 { &text[..last_ws] } else { &text[..run_end] })
}

/// First BPE token of a word given with its leading space, e.g. `" dog"`.
pub fn bpe_first_token(word_with_leading_space: &str, vocab: &BpeVocab) -> Result<String> {
    let piece = first_pretoken(word_with_leading_space)
        .ok_or_else(|| Error::Vocab("cannot tokenize empty text".into()))?;
    vocab
        .bpe(piece)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::Vocab("empty tokenization".into()))
}
