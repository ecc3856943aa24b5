//! Captioning decoder: embeddings, a two-stage conditional GRU with visual
//! attention, a bottleneck projection, and a tied softmax output layer.
//!
//! One decode step runs: embed the previous token, propose a hidden state
//! with the first GRU, attend over the image conditioned on that proposal,
//! then let a second GRU fold the attention context into the final hidden
//! state. The bottleneck compresses (embedding, hidden, context) to the
//! embedding width so the output projection can share the embedding matrix.

mod params;
mod step;

pub use params::{build_model, count_params, param_specs, Init, ParamIds, ParamSpec};
pub use step::{cgru_step, gru_block, DecoderState, GruNodes, ImageContext, ImageFeatures};

use crate::error::{Error, Result};
use crate::numerics::{ParamSet, Real};

/// Visual attention variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionMode {
    /// Elementwise gate from a single pooled feature vector.
    Pooled,
    /// Scaled dot-product attention over a feature grid, several heads.
    Mha,
}

/// Bottleneck variant between the hidden state and the output projection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BottleneckMode {
    /// Single linear map from the concatenated step vectors.
    Linear,
    /// A third GRU over the concatenation, then a linear shrink.
    DeepGru,
}

/// Structural hyperparameters of the decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Embedding width (before the width multiplier).
    pub d: usize,
    /// Hidden width (before the width multiplier).
    pub h: usize,
    /// Pooled visual feature width.
    pub v_dim: usize,
    /// Output vocabulary size, including the special tokens.
    pub vocab_size: usize,
    pub attention_mode: AttentionMode,
    /// Number of attention heads (grid attention only).
    pub mha_heads: usize,
    /// Per-head query width; `None` means the effective hidden width.
    pub mha_dq: Option<usize>,
    /// Feature grid shape for grid attention.
    pub mha_kv_rows: usize,
    pub mha_kv_dim: usize,
    pub bottleneck_mode: BottleneckMode,
    /// Share the embedding matrix with the output projection.
    pub tie_weights: bool,
    /// Decode length cap, in tokens after BOS.
    pub max_len: usize,
    /// Dropout on the bottleneck output at train time.
    pub dropout_p: f64,
    /// Uniform widening factor applied to `d` and `h`.
    pub width_multiplier: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 128,
            h: 256,
            v_dim: 2048,
            vocab_size: 0,
            attention_mode: AttentionMode::Pooled,
            mha_heads: 3,
            mha_dq: None,
            mha_kv_rows: 196,
            mha_kv_dim: 1024,
            bottleneck_mode: BottleneckMode::DeepGru,
            tie_weights: true,
            max_len: 50,
            dropout_p: 0.5,
            width_multiplier: 1,
        }
    }
}

impl ModelConfig {
    /// Embedding width after the width multiplier.
    pub fn d_eff(&self) -> usize {
        self.d * self.width_multiplier
    }

    /// Hidden width after the width multiplier.
    pub fn h_eff(&self) -> usize {
        self.h * self.width_multiplier
    }

    /// Per-head query width; defaults to the effective hidden width.
    pub fn dq_eff(&self) -> usize {
        self.mha_dq.unwrap_or_else(|| self.h_eff())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("h", self.h),
            ("v_dim", self.v_dim),
            ("vocab_size", self.vocab_size),
            ("max_len", self.max_len),
            ("width_multiplier", self.width_multiplier),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!(
                    "model dimension {name} must be positive"
                )));
            }
        }
        if self.attention_mode == AttentionMode::Mha {
            for (name, v) in [
                ("mha_heads", self.mha_heads),
                ("mha_kv_rows", self.mha_kv_rows),
                ("mha_kv_dim", self.mha_kv_dim),
                ("mha_dq", self.dq_eff()),
            ] {
                if v == 0 {
                    return Err(Error::Config(format!(
                        "model dimension {name} must be positive"
                    )));
                }
            }
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "dropout_p {} outside [0, 1)",
                self.dropout_p
            )));
        }
        Ok(())
    }
}

/// A decoder: configuration, parameter storage, and typed parameter handles.
#[derive(Clone, Debug)]
pub struct Model<T: Real> {
    pub config: ModelConfig,
    pub params: ParamSet<T>,
    pub ids: ParamIds,
}

impl<T: Real> Model<T> {
    /// Build a model with freshly initialized parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Model<T>> {
        build_model(config, seed)
    }
}
