//! Caption generation: greedy argmax decoding and beam search.
//!
//! Both decoders start from BOS, suppress the PAD/BOS/UNK ids, and stop a
//! hypothesis at EOS or the length cap. Beam search ranks completed
//! hypotheses by length-normalized log probability.

use crate::bpe::{BOS_ID, EOS_ID, PAD_ID, UNK_ID};
use crate::error::{Error, Result};
use crate::model::{cgru_step, ImageContext, ImageFeatures, Model};
use crate::numerics::{log_sum_exp, NodeId, Real, Tape};

/// One partial caption during beam search.
#[derive(Clone, Debug)]
struct Hypothesis {
    /// Emitted tokens; includes the final EOS when finished by EOS.
    tokens: Vec<u32>,
    /// Sum of masked log probabilities over all emitted tokens.
    logprob: f64,
    /// Hidden-state node to continue from.
    h: NodeId,
    finished: bool,
}

impl Hypothesis {
    /// Normalized score: log probability per scored step.
    fn norm_score(&self) -> f64 {
        if self.tokens.is_empty() {
            0.0
        } else {
            self.logprob / self.tokens.len() as f64
        }
    }
}

/// Log probabilities over the vocabulary with PAD/BOS/UNK driven to -inf
/// and the remainder renormalized.
pub(crate) fn masked_log_probs<T: Real>(logits_row: &[T]) -> Vec<f64> {
    let allowed: Vec<T> = logits_row
        .iter()
        .enumerate()
        .filter(|(i, _)| !is_masked(*i as u32))
        .map(|(_, &v)| v)
        .collect();
    let lse = log_sum_exp(&allowed).as_f64();
    logits_row
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if is_masked(i as u32) {
                f64::NEG_INFINITY
            } else {
                v.as_f64() - lse
            }
        })
        .collect()
}

fn is_masked(id: u32) -> bool {
    id == PAD_ID || id == BOS_ID || id == UNK_ID
}

/// Greedy decode: argmax token per step, ties to the lowest id.
///
/// Returns the caption without the terminating EOS.
pub fn greedy_decode<T: Real>(
    model: &Model<T>,
    features: &ImageFeatures<T>,
    max_len: usize,
) -> Result<Vec<u32>> {
    let mut tape = Tape::new();
    let ctx = ImageContext::new(&mut tape, model, features)?;
    let mut h = ctx.h0;
    let mut prev = BOS_ID;
    let mut out = Vec::new();
    for _ in 0..max_len {
        let state = cgru_step(&mut tape, model, &ctx, prev, h, None)?;
        let logits = tape.value(state.logits);
        let mut best: Option<(u32, f64)> = None;
        for (i, &v) in logits.row(0).iter().enumerate() {
            let id = i as u32;
            if is_masked(id) {
                continue;
            }
            let v = v.as_f64();
            // Strictly-greater keeps the lowest id among exact ties.
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((id, v));
            }
        }
        let (tok, _) = best.expect("vocabulary has unmasked ids");
        if tok == EOS_ID {
            break;
        }
        out.push(tok);
        prev = tok;
        h = state.h;
    }
    Ok(out)
}

/// Beam search; returns the best caption (without EOS) and its
/// length-normalized log probability.
pub fn beam_search<T: Real>(
    model: &Model<T>,
    features: &ImageFeatures<T>,
    beam: usize,
    max_len: usize,
) -> Result<(Vec<u32>, f64)> {
    if beam < 1 {
        return Err(Error::Validation(format!(
            "beam size {beam} must be at least 1"
        )));
    }
    let mut tape = Tape::new();
    let ctx = ImageContext::new(&mut tape, model, features)?;
    let root = Hypothesis {
        tokens: Vec::new(),
        logprob: 0.0,
        h: ctx.h0,
        finished: false,
    };
    if max_len == 0 {
        return Ok((Vec::new(), 0.0));
    }

    let mut live = vec![root];
    let mut completed: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        let mut candidates: Vec<Hypothesis> = Vec::new();
        for hyp in &live {
            let prev = hyp.tokens.last().copied().unwrap_or(BOS_ID);
            let state = cgru_step(&mut tape, model, &ctx, prev, hyp.h, None)?;
            let logp = masked_log_probs(tape.value(state.logits).row(0));
            for (i, &lp) in logp.iter().enumerate() {
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let mut tokens = hyp.tokens.clone();
                tokens.push(i as u32);
                candidates.push(Hypothesis {
                    tokens,
                    logprob: hyp.logprob + lp,
                    h: state.h,
                    finished: false,
                });
            }
        }
        // Deterministic selection: higher total log probability first,
        // lexicographically smaller token sequence on ties.
        candidates.sort_by(|a, b| {
            b.logprob
                .partial_cmp(&a.logprob)
                .expect("finite log probabilities")
                .then_with(|| a.tokens.cmp(&b.tokens))
        });
        candidates.truncate(beam);
        live = Vec::new();
        for mut cand in candidates {
            if cand.tokens.last() == Some(&EOS_ID) || cand.tokens.len() == max_len {
                cand.finished = true;
                completed.push(cand);
            } else {
                live.push(cand);
            }
        }
    }

    let pool = if completed.is_empty() {
        &live
    } else {
        &completed
    };
    let best = pool
        .iter()
        .max_by(|a, b| {
            a.norm_score()
                .partial_cmp(&b.norm_score())
                .expect("finite scores")
                .then_with(|| b.tokens.cmp(&a.tokens))
        })
        .expect("at least one hypothesis");
    let mut tokens = best.tokens.clone();
    if tokens.last() == Some(&EOS_ID) {
        tokens.pop();
    }
    Ok((tokens, best.norm_score()))
}
