//! Lightweight neural image captioning.
//!
//! A small, dependency-light library implementing the full captioning stack:
//!
//! - [`numerics`]: dense tensors, seeded RNG, reverse-mode tape, ADAM, and a
//!   finite-difference gradient verifier.
//! - [`bpe`]: byte-pair-encoding subword tokenizer and vocabulary.
//! - [`model`]: conditional-GRU decoder with pooled or multi-head visual
//!   attention and a weight-tied bottleneck projection.
//! - [`training`]: teacher-forced cross-entropy training and policy-gradient
//!   fine-tuning with a learned reward baseline.
//! - [`decoding`]: greedy and length-normalized beam search.
//! - [`metrics`]: corpus BLEU-4 and CIDEr-D.
//! - [`harness`]: synthetic scene dataset, JSONL/checkpoint formats, CLI.

pub mod bpe;
pub mod decoding;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
