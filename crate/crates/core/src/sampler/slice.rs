//! First-word slicing of free text.

use crate::cpd::{normalize_with, Normalization};

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '’' | '-')
}

/// Locates the first word run in `text`, skipping leading whitespace and
/// punctuation. Returns the run and whether text follows it (a boundary).
/// Apostrophes and hyphens only join when a word character follows.
fn first_run(text: &str) -> Option<(&str, bool)> {
    let start = text.char_indices().find(|(_, c)| c.is_alphanumeric())?.0;
    let rest = &text[start..];
    let mut chars = rest.char_indices().peekable();
    let mut end = rest.len();
    while let Some((i, c)) = chars.next() {
        if c.is_alphanumeric() {
            continue;
        }
        if is_joiner(c) {
            if let Some(&(_, next)) = chars.peek() {
                if next.is_alphanumeric() {
                    continue;
                }
            } else {
                // A dangling joiner at the very end may be a cut-off word.
                return Some((&rest[..i], false));
            }
        }
        end = i;
        break;
    }
    Some((&rest[..end], end < rest.len()))
}

/// Slices the first complete word of a model continuation.
///
/// A run that reaches the end of the text is treated as possibly truncated
/// and rejected (`None`), as is text with no word at all.
pub fn slice_first_word(raw_text: &str) -> Option<String> {
    slice_first_word_with(raw_text, Normalization::Folded)
}

pub fn slice_first_word_with(raw_text: &str, mode: Normalization) -> Option<String> {
    match first_run(raw_text) {
        Some((run, true)) => normalize_with(run, mode),
        _ => None,
    }
}

/// Like [`slice_first_word`] but accepts a run ending the text. Used for
/// human answers and chat replies, which are complete by construction.
pub fn first_word(text: &str) -> Option<String> {
    first_word_with(text, Normalization::Folded)
}

pub fn first_word_with(text: &str, mode: Normalization) -> Option<String> {
    first_run(text).and_then(|(run, _)| normalize_with(run, mode))
}
