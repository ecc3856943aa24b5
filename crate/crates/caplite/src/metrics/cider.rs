//! CIDEr-D: consensus-based caption scoring in [0, 10].
//!
//! Each sentence becomes four TF-IDF n-gram vectors (n = 1..4). A candidate
//! is compared to each reference by a clipped cosine similarity, candidate
//! counts clipped to the reference's, scaled by a Gaussian penalty on the
//! length difference. The score averages over references and orders, x10.

use super::ngram_counts;
use crate::error::{Error, Result};
use std::collections::{BTreeMap, BTreeSet};

const MAX_ORDER: usize = 4;

/// Default width of the Gaussian length penalty.
pub const DEFAULT_SIGMA: f64 = 6.0;

/// Document-frequency table for CIDEr-D IDF weights.
///
/// One "document" per image: an n-gram's frequency is the number of images
/// whose reference set contains it, regardless of multiplicity.
#[derive(Clone, Debug)]
pub struct NGramStats {
    doc_freq: BTreeMap<Vec<String>, u64>,
    num_images: usize,
}

impl NGramStats {
    /// Build document frequencies from per-image reference sets.
    pub fn from_references(references: &[Vec<Vec<String>>]) -> Result<NGramStats> {
        if references.is_empty() {
            return Err(Error::Validation(
                "cider: IDF requires at least one reference set".to_string(),
            ));
        }
        let mut doc_freq = BTreeMap::new();
        for refs in references {
            let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
            for r in refs {
                for order in 1..=MAX_ORDER {
                    seen.extend(ngram_counts(r, order).into_keys());
                }
            }
            for gram in seen {
                *doc_freq.entry(gram).or_insert(0) += 1;
            }
        }
        Ok(NGramStats {
            doc_freq,
            num_images: references.len(),
        })
    }

    pub fn num_images(&self) -> usize {
        self.num_images
    }

    /// IDF weight: ln(images) - ln(max(1, document frequency)).
    fn idf(&self, gram: &[String]) -> f64 {
        let df = self.doc_freq.get(gram).copied().unwrap_or(0);
        (self.num_images as f64).ln() - (df.max(1) as f64).ln()
    }
}

/// Per-order TF-IDF vectors plus norms and token length for one sentence.
struct TfIdf {
    vecs: [BTreeMap<Vec<String>, f64>; MAX_ORDER],
    norms: [f64; MAX_ORDER],
    length: usize,
}

impl TfIdf {
    fn build(tokens: &[String], idf: &NGramStats) -> TfIdf {
        let mut vecs: [BTreeMap<Vec<String>, f64>; MAX_ORDER] = Default::default();
        let mut norms = [0.0; MAX_ORDER];
        for order in 1..=MAX_ORDER {
            for (gram, count) in ngram_counts(tokens, order) {
                let w = count as f64 * idf.idf(&gram);
                norms[order - 1] += w * w;
                vecs[order - 1].insert(gram, w);
            }
            norms[order - 1] = norms[order - 1].sqrt();
        }
        TfIdf {
            vecs,
            norms,
            length: tokens.len(),
        }
    }
}

/// Clipped cosine per order, scaled by the length penalty.
fn similarity(cand: &TfIdf, reference: &TfIdf, sigma: f64) -> [f64; MAX_ORDER] {
    let delta = cand.length as f64 - reference.length as f64;
    let penalty = (-delta * delta / (2.0 * sigma * sigma)).exp();
    let mut vals = [0.0; MAX_ORDER];
    for (order, val) in vals.iter_mut().enumerate() {
        let mut dot = 0.0;
        for (gram, &cw) in &cand.vecs[order] {
            let rw = reference.vecs[order].get(gram).copied().unwrap_or(0.0);
            dot += cw.min(rw) * rw;
        }
        if cand.norms[order] > 0.0 && reference.norms[order] > 0.0 {
            *val = dot / (cand.norms[order] * reference.norms[order]) * penalty;
        }
    }
    vals
}

/// Sentence-level CIDEr-D of one candidate against its reference set.
pub fn cider_d_sentence(
    candidate: &[String],
    references: &[Vec<String>],
    idf: &NGramStats,
    sigma: f64,
) -> f64 {
    if references.is_empty() {
        return 0.0;
    }
    let cand = TfIdf::build(candidate, idf);
    let mut total = 0.0;
    for r in references {
        let vals = similarity(&cand, &TfIdf::build(r, idf), sigma);
        total += vals.iter().sum::<f64>() / MAX_ORDER as f64;
    }
    10.0 * total / references.len() as f64
}

/// Corpus-level CIDEr-D: mean of the per-image sentence scores.
pub fn cider_d(
    candidates: &[Vec<String>],
    references: &[Vec<Vec<String>>],
    idf: &NGramStats,
    sigma: f64,
) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::Validation(format!(
            "cider_d: {} candidates vs {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::Validation("cider_d: empty corpus".to_string()));
    }
    let sum: f64 = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| cider_d_sentence(c, r, idf, sigma))
        .sum();
    Ok(sum / candidates.len() as f64)
}
