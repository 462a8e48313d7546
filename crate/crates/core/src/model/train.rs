//! Epoch-based training with seeded shuffling and early stopping.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adamw::AdamWState;
use super::loss::{loss_backward, modality_weighted_loss, LossWeights};
use super::tensor::Real;
use super::{ModelError, ModelParams};
use crate::assembly::SequenceLayout;
use crate::rng::{shuffle, stream, sub_seed};

/// Optimization hyperparameters. The shuffle stream can be varied on its own
/// so significance runs perturb nothing but the minibatch order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Defaults to a stream derived from `seed` when absent.
    pub shuffle_seed: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            betas: (0.9, 0.999),
            weight_decay: 1e-4,
            batch_size: 8,
            max_epochs: 30,
            early_stop_patience: 5,
            seed: 0,
            shuffle_seed: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.learning_rate <= 0.0 {
            return Err(ModelError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.early_stop_patience == 0 {
            return Err(ModelError::InvalidConfig("patience must be at least 1".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(ModelError::InvalidConfig("batch_size and max_epochs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug)]
pub struct TrainResult<F> {
    /// Parameters from the best validation epoch.
    pub params: ModelParams<F>,
    pub history: Vec<EpochStats>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Mean weighted loss over a set without touching parameters.
pub fn mean_loss<F: Real>(
    params: &ModelParams<F>,
    set: &[SequenceLayout],
    weights: &LossWeights,
) -> Result<f64, ModelError> {
    let vocab = params.config().vocab_size;
    let mut total = 0.0;
    for seq in set {
        let logits = params.forward(&seq.tokens)?;
        total += modality_weighted_loss(&logits, vocab, seq, weights).total;
    }
    Ok(total / set.len().max(1) as f64)
}

/// Train until `max_epochs` or until validation loss has not improved for
/// `early_stop_patience` consecutive epochs. Returns the parameters of the
/// best epoch and the full per-epoch history with wall-clock seconds.
pub fn train<F: Real>(
    mut params: ModelParams<F>,
    train_set: &[SequenceLayout],
    val_set: &[SequenceLayout],
    weights: &LossWeights,
    cfg: &TrainConfig,
) -> Result<TrainResult<F>, ModelError> {
    cfg.validate()?;
    weights
        .validate()
        .map_err(ModelError::InvalidConfig)?;
    let vocab = params.config().vocab_size;
    let dropout_rate = params.config().dropout_rate;
    let shuffle_root = cfg.shuffle_seed.unwrap_or_else(|| sub_seed(cfg.seed, "shuffle", 0));

    let mut opt = AdamWState::new(&params);
    let mut grads = params.zeros_like();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history: Vec<EpochStats> = Vec::new();
    let mut best_epoch = 0usize;
    let mut best_val = f64::INFINITY;
    let mut best_params = params.clone();
    let mut stale = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let mut rng = stream(sub_seed(shuffle_root, "epoch", epoch as u64));
        shuffle(&mut rng, &mut order);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            for t in grads.tensors_mut() {
                t.zero();
            }
            let scale = 1.0 / batch.len() as f64;
            for &idx in batch {
                let seq = &train_set[idx];
                let mut drop_rng = stream(sub_seed(cfg.seed, "dropout", (epoch * train_set.len() + idx) as u64));
                let dropout = (dropout_rate > 0.0).then_some(&mut drop_rng);
                let (logits, cache) = params.forward_train(&seq.tokens, dropout)?;
                let breakdown = modality_weighted_loss(&logits, vocab, seq, weights);
                epoch_loss += breakdown.total;
                let dlogits = loss_backward(&logits, vocab, seq, weights, scale);
                params.backward(&seq.tokens, &cache, &dlogits, &mut grads);
            }
            opt.step(&mut params, &grads, cfg.learning_rate, cfg.betas, cfg.weight_decay);
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        if !train_loss.is_finite() {
            return Err(ModelError::Diverged { epoch, loss: train_loss });
        }
        let val_loss = mean_loss(&params, val_set, weights)?;
        if !val_loss.is_finite() {
            return Err(ModelError::Diverged { epoch, loss: val_loss });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            seconds: started.elapsed().as_secs_f64(),
        });

        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_params = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                break;
            }
        }
    }

    Ok(TrainResult {
        params: best_params,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Patience semantics are checked with a stub "validation" series by
    // replaying the selection logic; the integration tests drive real runs.
    #[test]
    fn patience_stops_after_five_stale_epochs() {
        let vals = [3.0, 2.0, 2.1, 2.2, 2.3, 2.4, 2.5, 1.0];
        let patience = 5;
        let mut best = f64::INFINITY;
        let mut best_epoch = 0;
        let mut stale = 0;
        let mut stopped_after = 0;
        for (i, &v) in vals.iter().enumerate() {
            let epoch = i + 1;
            if v < best {
                best = v;
                best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    stopped_after = epoch;
                    break;
                }
            }
        }
        assert_eq!(stopped_after, 7);
        assert_eq!(best_epoch, 2);
    }
}
