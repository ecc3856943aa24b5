//! Teacher-forced cross-entropy training.

use std::time::Instant;

use super::{
    early_stop, evaluate_with_beam, restore_params, snapshot_params, EpochLog, TrainConfig,
    TrainExample,
};
use crate::bpe::{Vocab, BOS_ID, EOS_ID};
use crate::error::{Error, Result};
use crate::model::{ImageContext, ImageFeatures, Model};
use crate::numerics::{AdamConfig, NodeId, Real, Rng, Tape};

/// Summed cross-entropy of one caption under teacher forcing. The decoder
/// consumes BOS followed by the caption and is scored on the caption
/// followed by EOS, so a k-token caption contributes k+1 terms. Returns
/// the tape and the loss node so the caller can scale before backward.
pub fn xe_example<T: Real>(
    model: &Model<T>,
    features: &ImageFeatures<T>,
    target_ids: &[u32],
    mut dropout_rng: Option<&mut Rng>,
) -> Result<(Tape<T>, NodeId)> {
    if target_ids.is_empty() {
        return Err(Error::Validation(
            "cannot train on an empty caption".to_string(),
        ));
    }
    for &t in target_ids {
        if t as usize >= model.config.vocab_size {
            return Err(Error::Validation(format!(
                "caption token id {t} outside vocabulary of {}",
                model.config.vocab_size
            )));
        }
    }
    let mut tape = Tape::new();
    let ctx = ImageContext::new(&mut tape, model, features)?;
    let mut h = ctx.h0;
    let mut y_prev = BOS_ID;
    let mut ces = Vec::with_capacity(target_ids.len() + 1);
    for &target in target_ids.iter().chain(std::iter::once(&EOS_ID)) {
        let state = crate::model::cgru_step(
            &mut tape,
            model,
            &ctx,
            y_prev,
            h,
            dropout_rng.as_deref_mut(),
        )?;
        ces.push(tape.cross_entropy_logits(state.logits, target as usize));
        h = state.h;
        y_prev = target;
    }
    let loss = tape.sum_nodes(&ces);
    Ok((tape, loss))
}

/// Minibatch cross-entropy training with per-epoch greedy validation.
/// Shuffles each epoch, averages gradients over the batch, steps ADAM per
/// batch, and stops once validation CIDEr-D has not improved for
/// `patience_epochs`. The model is left holding the best-validation
/// parameters. An empty validation split disables early stopping and the
/// validation columns log as NaN.
pub fn train_xe<T: Real>(
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
    let adam = AdamConfig {
        lr: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut rng = Rng::new(config.seed);
    let start = Instant::now();
    let mut logs = Vec::new();
    let mut history = Vec::new();
    let mut best_snapshot = None;

    for epoch in 0..config.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        rng.shuffle(&mut order);
        let mut total_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            model.params.zero_grads();
            let inv = T::from_f64(1.0 / batch.len() as f64);
            for &i in batch {
                let ex = &train[i];
                let (mut tape, loss) =
                    xe_example(model, &ex.features, &ex.target_ids, Some(&mut rng))?;
                total_loss += tape.scalar(loss).as_f64();
                let scaled = tape.affine(loss, inv, T::zero());
                tape.backward(scaled, &mut model.params);
            }
            model.params.adam_step_all(&adam);
        }
        let mean_loss = total_loss / train.len() as f64;

        let (val_bleu4, val_cider_d) = if val.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            evaluate_with_beam(model, val, vocab, 1, model.config.max_len)?
        };
        logs.push(EpochLog {
            epoch: epoch + 1,
            train_metric: mean_loss,
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
