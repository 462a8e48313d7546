//! Modality-weighted next-token cross-entropy.
//!
//! The loss is `sum_m (lambda_m / n_m) * CE(m)` where `CE(m)` sums the
//! cross-entropy of every scored position whose predicted token belongs to
//! modality `m` and `n_m` counts those positions within the sequence. A
//! position predicting a block separator is attributed to the modality of
//! the predicted token's block. Modalities with `lambda = 0` or `n_m = 0`
//! contribute nothing, exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tensor::{log_sum_exp, Real};
use crate::assembly::SequenceLayout;
use crate::vocab::Modality;

/// Per-modality loss scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda: BTreeMap<Modality, f64>,
}

impl Default for LossWeights {
    /// Speech 0.3, text 0.5, visual streams 0.5.
    fn default() -> Self {
        let mut lambda = BTreeMap::new();
        lambda.insert(Modality::Audio, 0.3);
        lambda.insert(Modality::Text, 0.5);
        lambda.insert(Modality::Image, 0.5);
        lambda.insert(Modality::Lip, 0.5);
        lambda.insert(Modality::Raster, 0.5);
        lambda.insert(Modality::Ocr, 0.5);
        Self { lambda }
    }
}

impl LossWeights {
    pub fn uniform(value: f64) -> Self {
        let lambda = Modality::ALL.iter().map(|&m| (m, value)).collect();
        Self { lambda }
    }

    /// Zero except the text term: the pure transcription objective.
    pub fn text_only(value: f64) -> Self {
        let mut w = Self::uniform(0.0);
        w.lambda.insert(Modality::Text, value);
        w
    }

    pub fn get(&self, m: Modality) -> f64 {
        self.lambda.get(&m).copied().unwrap_or(0.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            lambda: self.lambda.iter().map(|(&m, &l)| (m, l * c)).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.lambda.values().any(|&l| l < 0.0) {
            return Err("loss weights must be nonnegative".into());
        }
        if !self.lambda.values().any(|&l| l > 0.0) {
            return Err("at least one loss weight must be positive".into());
        }
        Ok(())
    }
}

/// Scalar loss plus the per-modality terms that sum to it.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Weighted term and scored-position count per modality.
    pub per_modality: BTreeMap<Modality, (f64, usize)>,
}

/// Modality of the prediction made at each scored position `t`, i.e. the
/// modality owning token `t + 1`.
pub fn position_modalities(layout: &SequenceLayout) -> Vec<Modality> {
    let token_mods = layout.token_modalities();
    (0..layout.tokens.len().saturating_sub(1))
        .map(|t| token_mods[t + 1])
        .collect()
}

fn position_counts(layout: &SequenceLayout) -> BTreeMap<Modality, usize> {
    let mut counts = BTreeMap::new();
    for m in position_modalities(layout) {
        *counts.entry(m).or_insert(0) += 1;
    }
    counts
}

/// Evaluate the weighted loss. `logits` is `[T, vocab]` row-major and must
/// align with `layout.tokens`.
pub fn modality_weighted_loss<F: Real>(
    logits: &[F],
    vocab_size: usize,
    layout: &SequenceLayout,
    weights: &LossWeights,
) -> LossBreakdown {
    let mods = position_modalities(layout);
    let counts = position_counts(layout);
    let mut per: BTreeMap<Modality, (f64, usize)> = BTreeMap::new();
    for t in 0..mods.len() {
        if !layout.target_mask[t] {
            continue;
        }
        let m = mods[t];
        let lambda = weights.get(m);
        let n_m = counts[&m];
        let entry = per.entry(m).or_insert((0.0, n_m));
        if lambda == 0.0 {
            continue;
        }
        let row = &logits[t * vocab_size..(t + 1) * vocab_size];
        let target = layout.tokens[t + 1] as usize;
        let ce = log_sum_exp(row) - row[target];
        entry.0 += lambda / n_m as f64 * ce.to_f64().unwrap();
    }
    let total = per.values().map(|(l, _)| l).sum();
    LossBreakdown {
        total,
        per_modality: per,
    }
}

/// Gradient of the weighted loss w.r.t. the logits, scaled by `scale`
/// (callers pass `1/batch_size` when averaging over a batch). Positions with
/// a zero lambda are skipped entirely so they contribute exactly zero.
pub fn loss_backward<F: Real>(
    logits: &[F],
    vocab_size: usize,
    layout: &SequenceLayout,
    weights: &LossWeights,
    scale: f64,
) -> Vec<F> {
    let mods = position_modalities(layout);
    let counts = position_counts(layout);
    let mut dlogits = vec![F::zero(); logits.len()];
    for t in 0..mods.len() {
        if !layout.target_mask[t] {
            continue;
        }
        let lambda = weights.get(mods[t]);
        if lambda == 0.0 {
            continue;
        }
        let w = F::from(lambda / counts[&mods[t]] as f64 * scale).unwrap();
        let row = &logits[t * vocab_size..(t + 1) * vocab_size];
        let target = layout.tokens[t + 1] as usize;
        let out = &mut dlogits[t * vocab_size..(t + 1) * vocab_size];
        // softmax(row) - onehot(target), scaled.
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for (slot, &v) in out.iter_mut().zip(row) {
            *slot = (v - max).exp();
            sum += *slot;
        }
        for slot in out.iter_mut() {
            *slot = *slot / sum * w;
        }
        out[target] -= w;
    }
    dlogits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::Token;

    /// A layout with one span per modality over the given token list.
    fn layout(tokens: Vec<Token>, spans: Vec<(Modality, usize, usize)>) -> SequenceLayout {
        let len = tokens.len();
        SequenceLayout {
            tokens,
            spans,
            target_mask: (0..len).map(|t| t + 1 < len).collect(),
            text_start: 0,
        }
    }

    #[test]
    fn uniform_logits_give_ln_vocab() {
        let v = 10;
        let lay = layout(
            vec![0, 1, 2, 3],
            vec![(Modality::Text, 0, 4)],
        );
        let logits = vec![0.0f64; 4 * v];
        let w = LossWeights::text_only(0.5);
        let b = modality_weighted_loss(&logits, v, &lay, &w);
        // Three scored text positions, each CE = ln V, averaged then scaled.
        let expect = 0.5 * (v as f64).ln();
        assert!((b.total - expect).abs() < 1e-12, "{}", b.total);
    }

    #[test]
    fn doubling_lambda_doubles_loss_and_gradient() {
        let v = 7;
        let lay = layout(
            vec![1, 2, 3, 4, 5],
            vec![(Modality::Audio, 0, 3), (Modality::Text, 3, 5)],
        );
        let logits: Vec<f64> = (0..5 * v).map(|i| ((i * 37 % 11) as f64) * 0.3 - 1.0).collect();
        let w = LossWeights::default();
        let w2 = w.scaled(2.0);
        let a = modality_weighted_loss(&logits, v, &lay, &w);
        let b = modality_weighted_loss(&logits, v, &lay, &w2);
        assert!((b.total - 2.0 * a.total).abs() < 1e-12);
        let ga = loss_backward(&logits, v, &lay, &w, 1.0);
        let gb = loss_backward(&logits, v, &lay, &w2, 1.0);
        for (x, y) in ga.iter().zip(&gb) {
            assert_eq!(*y, 2.0 * *x);
        }
    }

    #[test]
    fn breakdown_sums_to_total() {
        let v = 9;
        let lay = layout(
            vec![0, 1, 2, 3, 4, 5, 6],
            vec![
                (Modality::Audio, 0, 3),
                (Modality::Lip, 3, 5),
                (Modality::Text, 5, 7),
            ],
        );
        let logits: Vec<f64> = (0..7 * v).map(|i| (i as f64 * 0.7).sin()).collect();
        let w = LossWeights::default();
        let b = modality_weighted_loss(&logits, v, &lay, &w);
        let sum: f64 = b.per_modality.values().map(|(l, _)| l).sum();
        assert!((b.total - sum).abs() < 1e-12);
    }

    #[test]
    fn zero_lambda_zeroes_the_gradient_rows() {
        let v = 5;
        let lay = layout(
            vec![0, 1, 2, 3],
            vec![(Modality::Audio, 0, 2), (Modality::Text, 2, 4)],
        );
        let logits: Vec<f64> = (0..4 * v).map(|i| i as f64 * 0.1).collect();
        let w = LossWeights::text_only(1.0);
        let g = loss_backward(&logits, v, &lay, &w, 1.0);
        // Positions 0 and 1 predict audio tokens; their rows must be zero.
        // Position 1 predicts token 2, which is in the text span, so only
        // position 0 predicts within the audio block.
        for x in &g[0..v] {
            assert_eq!(*x, 0.0);
        }
    }

    #[test]
    fn separator_positions_attribute_to_the_predicted_block() {
        let lay = layout(
            vec![9, 9, 9, 7, 7],
            vec![(Modality::Audio, 0, 3), (Modality::Text, 3, 5)],
        );
        let mods = position_modalities(&lay);
        // Position 2 predicts token 3, the first token of the text block.
        assert_eq!(mods, vec![
            Modality::Audio,
            Modality::Audio,
            Modality::Text,
            Modality::Text,
        ]);
    }
}
