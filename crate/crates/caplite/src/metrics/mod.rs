//! Caption quality metrics: corpus and sentence BLEU-4, CIDEr-D.
//!
//! All scorers work on lowercased whitespace tokens; use [`tokenize`] to
//! normalize raw sentences. Scores are pure functions of their inputs.

mod bleu;
mod cider;

pub use bleu::{bleu4, bleu4_sentence};
pub use cider::{cider_d, cider_d_sentence, NGramStats, DEFAULT_SIGMA};

use std::collections::BTreeMap;

/// Lowercase and split on whitespace. No punctuation handling.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect()
}

/// Count the n-grams of `tokens` for one order `n` (keys are word windows).
pub(crate) fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<Vec<String>, u64> {
    let mut counts = BTreeMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        *counts.entry(window.to_vec()).or_insert(0) += 1;
    }
    counts
}
