//! BLEU-4: geometric mean of clipped 1..4-gram precisions with a brevity
//! penalty. Corpus mode pools counts over all candidates before the mean;
//! sentence mode smooths the higher-order precisions instead.

use super::ngram_counts;
use crate::error::{Error, Result};
use std::collections::BTreeMap;

const MAX_ORDER: usize = 4;

/// Corpus-level BLEU-4 over parallel candidate / reference-set lists.
///
/// Precisions are clipped against the per-reference maximum count and pooled
/// over the corpus; orders with no candidate n-grams anywhere are dropped
/// from the geometric mean. Brevity penalty exp(1 - r/c) applies when the
/// total candidate length `c` falls short of `r`, the summed closest
/// reference lengths (ties prefer the shorter reference).
pub fn bleu4(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::Validation(format!(
            "bleu4: {} candidates vs {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    let mut matched = [0u64; MAX_ORDER];
    let mut total = [0u64; MAX_ORDER];
    let mut cand_len = 0u64;
    let mut ref_len = 0u64;
    for (cand, refs) in candidates.iter().zip(references) {
        if refs.is_empty() {
            return Err(Error::Validation("bleu4: empty reference set".to_string()));
        }
        cand_len += cand.len() as u64;
        ref_len += closest_ref_len(cand.len(), refs) as u64;
        for (order, (m, t)) in matched.iter_mut().zip(&mut total).enumerate() {
            let (mm, tt) = clipped_matches(cand, refs, order + 1);
            *m += mm;
            *t += tt;
        }
    }
    if cand_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    let mut orders_used = 0u32;
    for (m, t) in matched.iter().zip(&total) {
        if *t == 0 {
            continue;
        }
        if *m == 0 {
            return Ok(0.0);
        }
        log_sum += (*m as f64 / *t as f64).ln();
        orders_used += 1;
    }
    if orders_used == 0 {
        return Ok(0.0);
    }
    let precision = (log_sum / f64::from(orders_used)).exp();
    Ok(brevity_penalty(cand_len, ref_len) * precision)
}

/// Sentence-level BLEU-4 with add-one smoothing on orders 2..4.
///
/// Unigram precision stays unsmoothed, so a candidate sharing no word with
/// the references scores 0.
pub fn bleu4_sentence(candidate: &[String], references: &[Vec<String>]) -> f64 {
    if candidate.is_empty() || references.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for order in 1..=MAX_ORDER {
        let (m, t) = clipped_matches(candidate, references, order);
        let p = if order == 1 {
            if m == 0 {
                return 0.0;
            }
            m as f64 / t as f64
        } else {
            (m as f64 + 1.0) / (t as f64 + 1.0)
        };
        log_sum += p.ln();
    }
    let precision = (log_sum / MAX_ORDER as f64).exp();
    let r = closest_ref_len(candidate.len(), references) as u64;
    brevity_penalty(candidate.len() as u64, r) * precision
}

/// Clipped match count and total candidate n-gram count for one order.
fn clipped_matches(candidate: &[String], references: &[Vec<String>], order: usize) -> (u64, u64) {
    let cand_counts = ngram_counts(candidate, order);
    let total: u64 = cand_counts.values().sum();
    if total == 0 {
        return (0, 0);
    }
    let mut max_ref: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    for r in references {
        for (gram, count) in ngram_counts(r, order) {
            let entry = max_ref.entry(gram).or_insert(0);
            *entry = (*entry).max(count);
        }
    }
    let matched = cand_counts
        .iter()
        .map(|(gram, &c)| c.min(max_ref.get(gram).copied().unwrap_or(0)))
        .sum();
    (matched, total)
}

/// Length of the reference closest to `cand_len`; ties go to the shorter.
fn closest_ref_len(cand_len: usize, references: &[Vec<String>]) -> usize {
    references
        .iter()
        .map(Vec::len)
        .min_by_key(|&l| (l.abs_diff(cand_len), l))
        .unwrap_or(0)
}

fn brevity_penalty(cand_len: u64, ref_len: u64) -> f64 {
    if cand_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    }
}
