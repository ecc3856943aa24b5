//! Policy-gradient fine-tuning on sentence-level metrics, with a learned
//! per-trajectory baseline.

use std::time::Instant;

use super::{
    early_stop, evaluate_with_beam, ids_to_words, restore_params, snapshot_params, EpochLog,
    RewardMetric, TrainConfig, TrainExample,
};
use crate::bpe::{Vocab, BOS_ID, EOS_ID};
use crate::error::{Error, Result};
use crate::metrics::{bleu4_sentence, cider_d_sentence, NGramStats, DEFAULT_SIGMA};
use crate::model::{cgru_step, ImageContext, ImageFeatures, Model};
use crate::numerics::{sample_categorical, AdamConfig, NodeId, Real, Rng, Tape, Tensor2D};

/// One Monte-Carlo rollout as seen by callers.
#[derive(Clone, Debug)]
pub struct RewardSample {
    /// Sampled caption, EOS excluded.
    pub tokens: Vec<u32>,
    /// Log-probability of the whole trajectory, terminal EOS included.
    pub logprob_sum: f64,
    /// Sentence metric against the references; zero until an update
    /// scores the sample.
    pub reward: f64,
    /// Learned-baseline value for the trajectory; zero until an update
    /// scores the sample.
    pub baseline: f64,
}

/// Batch statistics of one policy-gradient update.
#[derive(Clone, Copy, Debug, Default)]
pub struct RlStats {
    pub mean_reward: f64,
    pub mean_baseline: f64,
}

/// Scoring context for rewards: subword vocabulary plus the IDF table of
/// the split the rollouts are drawn from.
pub struct RewardContext<'a> {
    pub vocab: &'a Vocab,
    pub idf: &'a NGramStats,
    pub metric: RewardMetric,
}

impl RewardContext<'_> {
    fn score(&self, tokens: &[u32], references: &[Vec<String>]) -> Result<f64> {
        let words = ids_to_words(tokens, self.vocab)?;
        Ok(match self.metric {
            RewardMetric::CiderD => cider_d_sentence(&words, references, self.idf, DEFAULT_SIGMA),
            RewardMetric::Bleu4 => bleu4_sentence(&words, references),
        })
    }
}

/// A sampled trajectory with its tape still live, so gradients can flow
/// through the per-step cross-entropy terms.
struct Rollout<T: Real> {
    tape: Tape<T>,
    tokens: Vec<u32>,
    /// -log p of each sampled choice, terminal EOS included.
    ce_nodes: Vec<NodeId>,
    /// Hidden-state value per step, detached for the baseline head.
    h_values: Vec<Tensor2D<T>>,
    wbase: NodeId,
}

/// Ancestral sampling from the full next-token distribution; dropout is
/// off. Stops at EOS or after `max_len` steps.
fn rollout<T: Real>(
    model: &Model<T>,
    features: &ImageFeatures<T>,
    rng: &mut Rng,
    max_len: usize,
) -> Result<Rollout<T>> {
    let mut tape = Tape::new();
    let ctx = ImageContext::new(&mut tape, model, features)?;
    let mut h = ctx.h0;
    let mut y_prev = BOS_ID;
    let mut tokens = Vec::new();
    let mut ce_nodes = Vec::new();
    let mut h_values = Vec::new();
    for _ in 0..max_len {
        let state = cgru_step(&mut tape, model, &ctx, y_prev, h, None)?;
        let p_row = tape.value(state.p).row(0).to_vec();
        let choice = sample_categorical(&p_row, rng)? as u32;
        ce_nodes.push(tape.cross_entropy_logits(state.logits, choice as usize));
        h_values.push(tape.value(state.h).clone());
        h = state.h;
        y_prev = choice;
        if choice == EOS_ID {
            break;
        }
        tokens.push(choice);
    }
    Ok(Rollout {
        tape,
        tokens,
        ce_nodes,
        h_values,
        wbase: ctx.wbase,
    })
}

/// Draw one caption and report its tokens and trajectory log-probability.
/// The reward and baseline fields are left at zero; updates fill them.
pub fn sample_caption<T: Real>(
    model: &Model<T>,
    features: &ImageFeatures<T>,
    rng: &mut Rng,
    max_len: usize,
) -> Result<RewardSample> {
    let roll = rollout(model, features, rng, max_len)?;
    let logprob_sum: f64 = roll
        .ce_nodes
        .iter()
        .map(|&ce| -roll.tape.scalar(ce).as_f64())
        .sum();
    Ok(RewardSample {
        tokens: roll.tokens,
        logprob_sum,
        reward: 0.0,
        baseline: 0.0,
    })
}

/// Accumulate the policy-gradient and baseline gradients of one batch
/// into the parameter grads without stepping. Per sample: reward r from
/// the sentence metric, baseline b = mean over steps of the hidden state
/// projected by the baseline head (states detached, so the squared-error
/// term trains only the head), policy term (r - b) * sum of step
/// cross-entropies with b taken as a constant. Everything is scaled by
/// the number of contributing samples.
pub fn reinforce_accumulate<T: Real>(
    model: &mut Model<T>,
    batch: &[&TrainExample<T>],
    reward_ctx: &RewardContext<'_>,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<RlStats> {
    if batch.is_empty() {
        return Err(Error::Validation(
            "policy-gradient batch has no examples".to_string(),
        ));
    }
    let n_samples = batch.len() * config.rl_samples;
    let scale = T::from_f64(1.0 / n_samples as f64);
    let mut reward_sum = 0.0;
    let mut baseline_sum = 0.0;
    for ex in batch {
        for _ in 0..config.rl_samples {
            let mut roll = rollout(model, &ex.features, rng, model.config.max_len)?;
            // A zero-length trajectory has nothing to score or reinforce.
            if roll.ce_nodes.is_empty() {
                continue;
            }
            let r = reward_ctx.score(&roll.tokens, &ex.references)?;

            let steps = roll.h_values.len();
            let mut projections = Vec::with_capacity(steps);
            for h in &roll.h_values {
                let detached = roll.tape.constant(h.clone());
                projections.push(roll.tape.matmul(detached, roll.wbase));
            }
            let proj_sum = roll.tape.sum_nodes(&projections);
            let b_node = roll
                .tape
                .affine(proj_sum, T::from_f64(1.0 / steps as f64), T::zero());
            let b = roll.tape.scalar(b_node).as_f64();

            let ce_sum = roll.tape.sum_nodes(&roll.ce_nodes);
            let policy = roll.tape.affine(ce_sum, T::from_f64(r - b), T::zero());
            let diff = roll.tape.affine(b_node, T::one(), T::from_f64(-r));
            let baseline_loss = roll.tape.mul(diff, diff);
            let total = roll.tape.add(policy, baseline_loss);
            let scaled = roll.tape.affine(total, scale, T::zero());
            roll.tape.backward(scaled, &mut model.params);
            reward_sum += r;
            baseline_sum += b;
        }
    }
    Ok(RlStats {
        mean_reward: reward_sum / n_samples as f64,
        mean_baseline: baseline_sum / n_samples as f64,
    })
}

/// One batch update: zero grads, accumulate, ADAM step.
pub fn reinforce_update<T: Real>(
    model: &mut Model<T>,
    batch: &[&TrainExample<T>],
    reward_ctx: &RewardContext<'_>,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<RlStats> {
    model.params.zero_grads();
    let stats = reinforce_accumulate(model, batch, reward_ctx, config, rng)?;
    let adam = AdamConfig {
        lr: config.learning_rate,
        ..AdamConfig::default()
    };
    model.params.adam_step_all(&adam);
    Ok(stats)
}

/// Policy-gradient fine-tuning loop. Rewards use IDF statistics from the
/// training references. Epoch structure, validation, early stopping, and
/// best-checkpoint retention mirror the cross-entropy loop; the logged
/// training metric is the mean sampled reward.
pub fn finetune_rl<T: Real>(
    model: &mut Model<T>,
    train: &[TrainExample<T>],
    val: &[TrainExample<T>],
    vocab: &Vocab,
    config: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Validation(
            "training split has no examples".to_string(),
        ));
    }
    let train_refs: Vec<Vec<Vec<String>>> = train.iter().map(|e| e.references.clone()).collect();
    let idf = NGramStats::from_references(&train_refs)?;
    let reward_ctx = RewardContext {
        vocab,
        idf: &idf,
        metric: config.rl_reward_metric,
    };
    let mut rng = Rng::new(config.seed);
    let start = Instant::now();
    let mut logs = Vec::new();
    let mut history = Vec::new();
    let mut best_snapshot = None;

    for epoch in 0..config.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        rng.shuffle(&mut order);
        let mut reward_sum = 0.0;
        for batch_ids in order.chunks(config.batch_size) {
            let batch: Vec<&TrainExample<T>> = batch_ids.iter().map(|&i| &train[i]).collect();
            let stats = reinforce_update(model, &batch, &reward_ctx, config, &mut rng)?;
            reward_sum += stats.mean_reward * (batch.len() * config.rl_samples) as f64;
        }
        let mean_reward = reward_sum / (train.len() * config.rl_samples) as f64;

        let (val_bleu4, val_cider_d) = if val.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            evaluate_with_beam(model, val, vocab, 1, model.config.max_len)?
        };
        logs.push(EpochLog {
            epoch: epoch + 1,
            train_metric: mean_reward,
            val_bleu4,
            val_cider_d,
            elapsed_s: start.elapsed().as_secs_f64(),
        });

        if !val.is_empty() {
            history.push(val_cider_d);
            let (stop, best) = early_stop(&history, config.patience_epochs);
            if best == Some(history.len() - 1) {
                best_snapshot = Some(snapshot_params(model));
            }
            if stop {
                break;
            }
        }
    }
    if let Some(snapshot) = &best_snapshot {
        restore_params(model, snapshot);
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::{forced_chain_features, forced_chain_model, tiny_config};
    use crate::model::ModelConfig;
    use crate::numerics::adam_step;

    fn letter_vocab() -> Vocab {
        let corpus: Vec<Vec<&str>> = vec![vec!["aa", "bb", "cc", "dd", "ee", "ff"]];
        Vocab::build(&corpus)
    }

    fn stats_for(refs: &[Vec<Vec<String>>]) -> NGramStats {
        NGramStats::from_references(refs).unwrap()
    }

    #[test]
    fn near_one_hot_policy_samples_its_chain() {
        let model = forced_chain_model(&[0, 4, 0, 0, 5, 2]);
        let feats = forced_chain_features(&model);
        let mut rng = Rng::new(5);
        for _ in 0..20 {
            let s = sample_caption(&model, &feats, &mut rng, 8).unwrap();
            assert_eq!(s.tokens, vec![4, 5]);
            assert!(s.logprob_sum > -1e-9);
            assert_eq!(s.reward, 0.0);
            assert_eq!(s.baseline, 0.0);
        }
    }

    #[test]
    fn sampling_respects_max_len() {
        let model: Model<f64> = Model::new(tiny_config(), 3).unwrap();
        let feats = crate::model::testutil::random_features(&model.config, 4);
        let mut rng = Rng::new(6);
        for _ in 0..50 {
            let s = sample_caption(&model, &feats, &mut rng, 2).unwrap();
            assert!(s.tokens.len() <= 2);
        }
        let s = sample_caption(&model, &feats, &mut rng, 0).unwrap();
        assert!(s.tokens.is_empty());
        assert_eq!(s.logprob_sum, 0.0);
    }

    #[test]
    fn first_step_sample_frequencies_match_the_distribution() {
        let model: Model<f64> = Model::new(tiny_config(), 11).unwrap();
        let feats = crate::model::testutil::random_features(&model.config, 12);
        // Reference distribution from one teacher step.
        let mut tape = Tape::new();
        let ctx = ImageContext::new(&mut tape, &model, &feats).unwrap();
        let state = cgru_step(&mut tape, &model, &ctx, BOS_ID, ctx.h0, None).unwrap();
        let p = tape.value(state.p).row(0).to_vec();

        let n = 10_000;
        let mut counts = vec![0usize; model.config.vocab_size];
        let mut rng = Rng::new(13);
        for _ in 0..n {
            let s = sample_caption(&model, &feats, &mut rng, 1).unwrap();
            match s.tokens.first() {
                Some(&t) => counts[t as usize] += 1,
                None => counts[EOS_ID as usize] += 1,
            }
        }
        for (id, &c) in counts.iter().enumerate() {
            let freq = c as f64 / n as f64;
            assert!(
                (freq - p[id]).abs() < 0.02,
                "token {id}: frequency {freq} vs probability {}",
                p[id]
            );
        }
    }

    #[test]
    fn zero_advantage_accumulates_exactly_zero_gradient() {
        // Reward 0 (no overlap with the reference) and baseline 0 (zeroed
        // head): both loss terms carry a zero factor, so every gradient
        // entry stays exactly 0.
        let mut model: Model<f64> = Model::new(tiny_config(), 21).unwrap();
        let wbase = model.ids.wbase;
        model.params.get_mut(wbase).value.fill(0.0);
        let feats = crate::model::testutil::random_features(&model.config, 22);
        let vocab = letter_vocab();
        let references = vec![vec!["zzz".to_string()]];
        let idf = stats_for(std::slice::from_ref(&references));
        let ex = TrainExample {
            id: "x".to_string(),
            features: feats,
            target_ids: vec![4],
            references,
        };
        let ctx = RewardContext {
            vocab: &vocab,
            idf: &idf,
            metric: RewardMetric::CiderD,
        };
        let config = TrainConfig::default();
        let mut rng = Rng::new(23);
        model.params.zero_grads();
        let stats = reinforce_accumulate(&mut model, &[&ex], &ctx, &config, &mut rng).unwrap();
        assert_eq!(stats.mean_reward, 0.0);
        assert_eq!(stats.mean_baseline, 0.0);
        assert_eq!(model.params.grad_max_abs(), 0.0);
    }

    #[test]
    fn converged_baseline_cancels_a_constant_reward() {
        // The near-deterministic policy always emits the same four-token
        // caption, which matches its reference exactly, so the reward is a
        // constant 10. Training only the baseline head drives b toward 10
        // and the policy gradient toward zero.
        let mut model = forced_chain_model(&[0, 4, 0, 0, 5, 6, 7, 2]);
        // The chain rig zeroes every recurrent path, which would leave
        // h_t = 0 and starve the baseline head. Saturating the update
        // gates holds h_t at a nonzero h0 instead; the bottleneck rows
        // for h and c stay zero, so the chain's logits are untouched.
        for gru in [model.ids.gru1, model.ids.gru2] {
            model.params.get_mut(gru.bz).value.fill(10.0);
        }
        let wimg = model.ids.wimg.unwrap();
        model.params.get_mut(wimg).value.fill(0.5);
        let mut feats = forced_chain_features(&model);
        feats.pooled.fill(1.0);
        let vocab = letter_vocab();
        let references = vec![ids_to_words(&[4, 5, 6, 7], &vocab).unwrap()];
        // A second image with disjoint words keeps the IDF weights nonzero;
        // a one-image corpus would zero every weight (df = N).
        let other: Vec<Vec<String>> = vec![["qq", "ww", "ee", "rr"].map(str::to_string).to_vec()];
        let idf = stats_for(&[references.clone(), other]);
        let ex = TrainExample {
            id: "x".to_string(),
            features: feats,
            target_ids: vec![4, 5, 6, 7],
            references,
        };
        let ctx = RewardContext {
            vocab: &vocab,
            idf: &idf,
            metric: RewardMetric::CiderD,
        };
        let config = TrainConfig::default();
        let wbase = model.ids.wbase;
        let adam = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut rng = Rng::new(31);

        let policy_grad_max = |m: &Model<f64>| {
            m.params
                .iter()
                .filter(|p| p.name != "Wbase")
                .map(|p| p.grad.max_abs())
                .fold(0.0, f64::max)
        };

        model.params.zero_grads();
        let s0 = reinforce_accumulate(&mut model, &[&ex], &ctx, &config, &mut rng).unwrap();
        assert!((s0.mean_reward - 10.0).abs() < 1e-9);
        let initial = policy_grad_max(&model);
        assert!(initial > 0.0);

        for _ in 0..400 {
            model.params.zero_grads();
            reinforce_accumulate(&mut model, &[&ex], &ctx, &config, &mut rng).unwrap();
            adam_step(model.params.get_mut(wbase), &adam);
        }
        model.params.zero_grads();
        let s1 = reinforce_accumulate(&mut model, &[&ex], &ctx, &config, &mut rng).unwrap();
        assert!((s1.mean_baseline - 10.0).abs() < 0.1);
        assert!(policy_grad_max(&model) < 0.02 * initial);
    }

    #[test]
    fn same_seed_reproduces_rl_logs_and_parameters() {
        let model_config = ModelConfig {
            d: 4,
            h: 6,
            v_dim: 5,
            vocab_size: 10,
            max_len: 5,
            ..ModelConfig::default()
        };
        let vocab = letter_vocab();
        let mut examples = Vec::new();
        for i in 0..4u64 {
            let feats = crate::model::testutil::random_features(&model_config, 70 + i);
            let ids = vec![4 + (i % 2) as u32, 6];
            examples.push(TrainExample {
                id: format!("ex{i}"),
                features: feats,
                target_ids: ids.clone(),
                references: vec![ids_to_words(&ids, &vocab).unwrap()],
            });
        }
        let (train, val) = examples.split_at(3);
        let config = TrainConfig {
            batch_size: 2,
            max_epochs: 2,
            seed: 77,
            ..TrainConfig::default()
        };
        let run = || {
            let mut model: Model<f64> = Model::new(model_config.clone(), 14).unwrap();
            let logs = finetune_rl(&mut model, train, val, &vocab, &config).unwrap();
            (logs, super::super::snapshot_params(&model))
        };
        let (logs_a, params_a) = run();
        let (logs_b, params_b) = run();
        assert_eq!(logs_a.len(), logs_b.len());
        for (a, b) in logs_a.iter().zip(&logs_b) {
            assert_eq!(a.train_metric.to_bits(), b.train_metric.to_bits());
            assert_eq!(a.val_cider_d.to_bits(), b.val_cider_d.to_bits());
        }
        for (ta, tb) in params_a.iter().zip(&params_b) {
            assert_eq!(ta.data(), tb.data());
        }
    }
}
