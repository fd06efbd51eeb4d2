//! Categorical distributions over word strings.
//!
//! A [`Cpd`] is the shared currency of the toolkit: human targets, oracle
//! halves and model estimates are all represented the same way, so every
//! comparison reduces to [`tvd`] over the union of two supports.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of a [`Cpd`].
pub const MASS_TOLERANCE: f64 = 1e-9;

/// How raw strings are turned into word keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Lowercase and strip surrounding punctuation and whitespace.
    #[default]
    Folded,
    /// Strip surrounding whitespace only; used for sensitivity checks.
    Exact,
}

impl Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::Folded => "folded",
            Normalization::Exact => "exact",
        }
    }

    pub fn is_folded(&self) -> bool {
        *self == Normalization::Folded
    }
}

/// Lowercases `raw` and strips surrounding punctuation and whitespace.
///
/// Internal characters (apostrophes, hyphens) are kept. Returns `None` when
/// nothing is left.
pub fn normalize_word(raw: &str) -> Option<String> {
    normalize_with(raw, Normalization::Folded)
}

pub fn normalize_with(raw: &str, mode: Normalization) -> Option<String> {
    let out = match mode {
        Normalization::Folded => {
            let lower = raw.to_lowercase();
            lower.trim_matches(|c: char| !c.is_alphanumeric()).to_string()
        }
        Normalization::Exact => raw.trim().to_string(),
    };
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}

/// Positive integer counts per word.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordCounts {
    counts: BTreeMap<String, u64>,
}

impl WordCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, word: impl Into<String>, count: u64) {
        if count > 0 {
            *self.counts.entry(word.into()).or_insert(0) += count;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(w, c)| (w.as_str(), *c))
    }

    /// Expands the counts into one entry per observation, in word order.
    pub fn expand(&self) -> Vec<String> {
        self.counts
            .iter()
            .flat_map(|(w, &c)| std::iter::repeat_n(w.clone(), c as usize))
            .collect()
    }
}

impl<S: Into<String>> FromIterator<S> for WordCounts {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut counts = WordCounts::new();
        for w in iter {
            counts.add(w, 1);
        }
        counts
    }
}

/// A categorical distribution over words. Zero-probability entries are never
/// stored, and the mass sums to one within [`MASS_TOLERANCE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CpdRepr", into = "CpdRepr")]
pub struct Cpd {
    entries: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct CpdRepr {
    entries: BTreeMap<String, f64>,
}

impl TryFrom<CpdRepr> for Cpd {
    type Error = Error;

    fn try_from(repr: CpdRepr) -> Result<Self> {
        Cpd::from_probs(repr.entries)
    }
}

impl From<Cpd> for CpdRepr {
    fn from(cpd: Cpd) -> Self {
        CpdRepr {
            entries: cpd.entries,
        }
    }
}

impl Cpd {
    /// Validates an explicit probability table. Zero entries are dropped.
    pub fn from_probs<S: Into<String>>(probs: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (w, p) in probs {
            let w = w.into();
            if !p.is_finite() || p < 0.0 || p > 1.0 + MASS_TOLERANCE {
                return Err(Error::Estimation(format!("invalid probability {p} for `{w}`")));
            }
            if p > 0.0 {
                *entries.entry(w).or_insert(0.0) += p;
            }
        }
        let mass: f64 = entries.values().sum();
        if entries.is_empty() || (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Estimation(format!("probabilities sum to {mass}, expected 1")));
        }
        Ok(Cpd { entries })
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights<S: Into<String>>(
        weights: impl IntoIterator<Item = (S, f64)>,
    ) -> Result<Self> {
        let mut raw = BTreeMap::new();
        for (w, x) in weights {
            let w = w.into();
            if !x.is_finite() || x < 0.0 {
                return Err(Error::Estimation(format!("invalid weight {x} for `{w}`")));
            }
            if x > 0.0 {
                *raw.entry(w).or_insert(0.0) += x;
            }
        }
        let total: f64 = raw.values().sum();
        if raw.is_empty() || total <= 0.0 {
            return Err(Error::Estimation("no positive weight".into()));
        }
        let entries = raw.into_iter().map(|(w, x)| (w, x / total)).collect();
        Ok(Cpd { entries })
    }

    /// A distribution with all mass on `word`.
    pub fn point_mass(word: impl Into<String>) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(word.into(), 1.0);
        Cpd { entries }
    }

    pub fn prob(&self, word: &str) -> f64 {
        self.entries.get(word).copied().unwrap_or(0.0)
    }

    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(w, p)| (w.as_str(), *p))
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn mass(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Draws one word by inverse-CDF sampling over the word order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &str {
        let u: f64 = rng.gen::<f64>() * self.mass();
        let mut acc = 0.0;
        let mut last = "";
        for (w, p) in &self.entries {
            acc += p;
            last = w;
            if u < acc {
                return w;
            }
        }
        last
    }

    /// Pushes the mass of each word through `group_of`, summing within groups.
    pub fn repartition<F>(&self, mut group_of: F) -> Cpd
    where
        F: FnMut(&str) -> String,
    {
        let mut entries: BTreeMap<String, f64> = BTreeMap::new();
        for (w, p) in &self.entries {
            *entries.entry(group_of(w)).or_insert(0.0) += p;
        }
        Cpd { entries }
    }
}

/// Relative-frequency estimate.
pub fn mle(counts: &WordCounts) -> Result<Cpd> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::Estimation("cannot estimate from empty counts".into()));
    }
    let entries = counts
        .iter()
        .map(|(w, c)| (w.to_string(), c as f64 / total as f64))
        .collect();
    Ok(Cpd { entries })
}

/// Total variation distance over the union of both supports.
pub fn tvd(p: &Cpd, q: &Cpd) -> f64 {
    let mut sum = 0.0;
    for (w, pw) in p.iter() {
        sum += (pw - q.prob(w)).abs();
    }
    for (w, qw) in q.iter() {
        if !p.contains(w) {
            sum += qw;
        }
    }
    (0.5 * sum).clamp(0.0, 1.0)
}

/// Shannon entropy in nats.
pub fn entropy(p: &Cpd) -> f64 {
    let h: f64 = p.iter().map(|(_, x)| if x > 0.0 { -x * x.ln() } else { 0.0 }).sum();
    h.max(0.0)
}

/// How ties for the most probable word are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "seed")]
pub enum TieBreak {
    #[default]
    Lexicographic,
    Seeded(u64),
}

/// The most probable word of a distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub word: String,
    pub probability: f64,
    /// More than one word shares the maximal probability.
    pub tied: bool,
}

const TIE_TOLERANCE: f64 = 1e-12;

pub fn mode(p: &Cpd, rule: TieBreak) -> Mode {
    let best = p.iter().map(|(_, x)| x).fold(f64::NEG_INFINITY, f64::max);
    // Keys iterate in lexicographic order.
    let tied: Vec<&str> = p
        .iter()
        .filter(|(_, x)| (best - x).abs() <= TIE_TOLERANCE)
        .map(|(w, _)| w)
        .collect();
    let word = match rule {
        TieBreak::Lexicographic => tied[0],
        TieBreak::Seeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            tied.choose(&mut rng).copied().unwrap_or(tied[0])
        }
    };
    Mode {
        word: word.to_string(),
        probability: p.prob(word),
        tied: tied.len() > 1,
    }
}
