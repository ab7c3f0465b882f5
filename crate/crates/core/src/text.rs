//! Text normalization and tokenization shared across the pipeline.
//!
//! A "token" everywhere in this workspace is a maximal non-whitespace run
//! after Unicode NFC normalization. That definition is reproducible across
//! scripts (including Arabic) and needs no language model.

use alloc::string::String;
use alloc::vec::Vec;
use unicode_normalization::UnicodeNormalization;

/// NFC-normalizes and collapses all whitespace runs to single spaces.
pub fn normalize(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    let mut out = String::with_capacity(nfc.len());
    for tok in nfc.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

/// Whitespace tokens of `text` (no further normalization).
pub fn tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Number of whitespace tokens in `text`.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Index-side analysis: NFC, case fold, whitespace tokenization. No stemming
/// or stopword removal — stemming would be wrong for Arabic.
pub fn index_tokens(text: &str) -> Vec<String> {
    let nfc: String = text.nfc().collect();
    nfc.split_whitespace().map(|t| t.to_lowercase()).collect()
}

/// Normalization used for exact-match comparisons: NFC, case fold, collapsed
/// whitespace.
pub fn normalize_for_match(text: &str) -> String {
    normalize(text).to_lowercase()
}
