//! Training loops: teacher-forced cross-entropy and policy-gradient
//! fine-tuning, plus the shared evaluation and early-stopping machinery.

mod rl;
mod xe;

pub use rl::{finetune_rl, reinforce_update, sample_caption, RewardSample, RlStats};
pub use xe::{train_xe, xe_example};

use crate::bpe::{self, Vocab};
use crate::decoding::{beam_search, greedy_decode};
use crate::error::{Error, Result};
use crate::metrics::{self, bleu4, cider_d, NGramStats, DEFAULT_SIGMA};
use crate::model::{AttentionMode, BottleneckMode, ImageFeatures, Model, ModelConfig};
use crate::numerics::{finite_diff_gradcheck, GradCheckReport, ParamSet, Real, Rng, Tensor2D};

/// Which sentence-level metric drives the policy-gradient reward.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardMetric {
    CiderD,
    Bleu4,
}

/// Optimizer and loop settings shared by both training phases.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Epoch cap; the loop also stops early on stalled validation.
    pub max_epochs: usize,
    /// Epochs without a new validation best before stopping.
    pub patience_epochs: usize,
    /// Monte-Carlo rollouts per example in a policy-gradient update.
    pub rl_samples: usize,
    pub rl_reward_metric: RewardMetric,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 4e-4,
            batch_size: 256,
            max_epochs: 100,
            patience_epochs: 10,
            rl_samples: 1,
            rl_reward_metric: RewardMetric::CiderD,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".to_string()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".to_string()));
        }
        if self.rl_samples == 0 {
            return Err(Error::Config("rl_samples must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// One image prepared for the loops: features plus the encoded teacher
/// caption and the word-tokenized references used for scoring.
#[derive(Clone, Debug)]
pub struct TrainExample<T: Real> {
    pub id: String,
    pub features: ImageFeatures<T>,
    /// Subword ids of the primary caption, without BOS or EOS.
    pub target_ids: Vec<u32>,
    /// Every reference caption, scoring-tokenized.
    pub references: Vec<Vec<String>>,
}

/// One line of the training log. `train_metric` is the mean per-example
/// cross-entropy during the first phase and the mean reward during
/// fine-tuning.
#[derive(Clone, Debug)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_metric: f64,
    pub val_bleu4: f64,
    pub val_cider_d: f64,
    pub elapsed_s: f64,
}

impl EpochLog {
    /// Tab-separated line: epoch, train metric, val BLEU-4, val CIDEr-D,
    /// elapsed seconds.
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.3}",
            self.epoch, self.train_metric, self.val_bleu4, self.val_cider_d, self.elapsed_s
        )
    }
}

/// Map decoded subword ids back to scoring tokens (words).
pub fn ids_to_words(ids: &[u32], vocab: &Vocab) -> Result<Vec<String>> {
    let tokens = vocab.tokens_of(ids)?;
    Ok(metrics::tokenize(&bpe::decode(&tokens)))
}

/// Corpus BLEU-4 and CIDEr-D of the model's decodes over a split. `beam`
/// of 1 decodes greedily; larger widths run the beam search. IDF weights
/// come from the references of this split.
pub fn evaluate_with_beam<T: Real>(
    model: &Model<T>,
    examples: &[TrainExample<T>],
    vocab: &Vocab,
    beam: usize,
    max_len: usize,
) -> Result<(f64, f64)> {
    if examples.is_empty() {
        return Err(Error::Validation(
            "cannot evaluate an empty split".to_string(),
        ));
    }
    let mut candidates = Vec::with_capacity(examples.len());
    let mut references = Vec::with_capacity(examples.len());
    for ex in examples {
        let ids = if beam <= 1 {
            greedy_decode(model, &ex.features, max_len)?
        } else {
            beam_search(model, &ex.features, beam, max_len)?.0
        };
        candidates.push(ids_to_words(&ids, vocab)?);
        references.push(ex.references.clone());
    }
    let stats = NGramStats::from_references(&references)?;
    let b = bleu4(&candidates, &references)?;
    let c = cider_d(&candidates, &references, &stats, DEFAULT_SIGMA)?;
    Ok((b, c))
}

/// Early-stopping rule over a to-maximize validation history: stop once
/// the latest epoch sits `patience` or more past the best one. Returns
/// the decision and the zero-based index of the best epoch. Ties keep
/// the earliest best.
pub fn early_stop(history: &[f64], patience: usize) -> (bool, Option<usize>) {
    let mut best: Option<usize> = None;
    for (i, &v) in history.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) if v > history[b] => best = Some(i),
            _ => {}
        }
    }
    match best {
        None => (false, None),
        Some(b) => ((history.len() - 1) - b >= patience, Some(b)),
    }
}

/// Epsilon for the full-model finite-difference suite. The caption loss
/// is O(1), so the largest allowed step keeps subtraction noise on
/// near-zero gradient entries well under the pass threshold.
pub const GRADCHECK_EPSILON: f64 = 1e-3;

/// Threshold every configuration cell must beat.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Fixture seed bases for the suite (cell index is added to each). Chosen
/// so no cell's true gradient has entries so close to zero that central
/// differences of an O(1) loss drown them in subtraction noise.
const GRADCHECK_FEATURE_SEED_BASE: u64 = 100;
const GRADCHECK_MODEL_SEED_BASE: u64 = 200;

/// Run the caption-loss finite-difference check over every configuration
/// cell: both attention modes, both bottlenecks, tied and untied output.
/// Returns (cell label, report) pairs in a fixed order.
pub fn xe_gradcheck_suite(
    d: usize,
    h: usize,
    vocab_size: usize,
    v_dim: usize,
) -> Result<Vec<(String, GradCheckReport)>> {
    let mut out = Vec::new();
    let targets = [4u32, (vocab_size - 1) as u32];
    for attention_mode in [AttentionMode::Pooled, AttentionMode::Mha] {
        for bottleneck_mode in [BottleneckMode::Linear, BottleneckMode::DeepGru] {
            for tie_weights in [true, false] {
                let config = ModelConfig {
                    d,
                    h,
                    v_dim,
                    vocab_size,
                    attention_mode,
                    bottleneck_mode,
                    tie_weights,
                    mha_heads: 2,
                    mha_dq: Some(6),
                    mha_kv_rows: 5,
                    mha_kv_dim: 12,
                    max_len: 8,
                    ..ModelConfig::default()
                };
                let label = format!(
                    "{}+{}+{}",
                    match attention_mode {
                        AttentionMode::Pooled => "pooled",
                        AttentionMode::Mha => "mha",
                    },
                    match bottleneck_mode {
                        BottleneckMode::Linear => "linear",
                        BottleneckMode::DeepGru => "deep_gru",
                    },
                    if tie_weights { "tied" } else { "untied" }
                );
                let mut rng = Rng::new(out.len() as u64 + GRADCHECK_FEATURE_SEED_BASE);
                let mut pooled = Tensor2D::zeros(1, config.v_dim);
                for v in pooled.data_mut() {
                    *v = rng.uniform_in(-1.0, 1.0);
                }
                let grid = if attention_mode == AttentionMode::Mha {
                    let mut g = Tensor2D::zeros(config.mha_kv_rows, config.mha_kv_dim);
                    for v in g.data_mut() {
                        *v = rng.uniform_in(-1.0, 1.0);
                    }
                    Some(g)
                } else {
                    None
                };
                let features = ImageFeatures { pooled, grid };

                let mut model: Model<f64> =
                    Model::new(config, out.len() as u64 + GRADCHECK_MODEL_SEED_BASE)?;
                // Check the per-token mean loss: an O(1) value keeps the
                // central-difference subtraction noise under the relative
                // error floor on near-zero gradient entries.
                let token_scale = 1.0 / (targets.len() + 1) as f64;
                model.params.zero_grads();
                let (mut tape, loss_sum) = xe_example(&model, &features, &targets, None)?;
                let loss = tape.affine(loss_sum, token_scale, 0.0);
                tape.backward(loss, &mut model.params);
                let config_clone = model.config.clone();
                let ids_clone = model.ids.clone();
                let features_clone = features.clone();
                let pure = move |set: &ParamSet<f64>| -> f64 {
                    let m = Model {
                        config: config_clone.clone(),
                        params: set.clone(),
                        ids: ids_clone.clone(),
                    };
                    let (mut tape, loss_sum) = xe_example(&m, &features_clone, &targets, None)
                        .expect("loss must build for a validated config");
                    let loss = tape.affine(loss_sum, token_scale, 0.0);
                    tape.scalar(loss)
                };
                let report = finite_diff_gradcheck(&mut model.params, pure, GRADCHECK_EPSILON)?;
                out.push((label, report));
            }
        }
    }
    Ok(out)
}

/// Snapshot of every parameter value, used to retain the best-validation
/// model across further epochs.
pub(crate) fn snapshot_params<T: Real>(model: &Model<T>) -> Vec<crate::numerics::Tensor2D<T>> {
    model.params.iter().map(|p| p.value.clone()).collect()
}

pub(crate) fn restore_params<T: Real>(
    model: &mut Model<T>,
    snapshot: &[crate::numerics::Tensor2D<T>],
) {
    for (param, saved) in model.params.iter_mut().zip(snapshot) {
        param.value = saved.clone();
    }
}
