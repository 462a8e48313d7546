//! Greedy (temperature 0) decoding.

use super::tensor::Real;
use super::{ModelError, ModelParams};
use crate::vocab::{Special, Token, VocabLayout};

/// Argmax with ties broken toward the lowest token id.
pub fn argmax_lowest<F: Real>(row: &[F]) -> Token {
    let mut best = 0usize;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best as Token
}

/// Feed the prefix (all modality blocks, label excluded), then repeatedly
/// append the argmax token until EOS or `max_new` tokens. Returns only the
/// generated text-range tokens; separators, EOS, and any stray non-text
/// tokens are dropped from the transcription.
pub fn generate_greedy<F: Real>(
    params: &ModelParams<F>,
    prefix: &[Token],
    max_new: usize,
    vocab: &VocabLayout,
) -> Result<Vec<Token>, ModelError> {
    let max_len = params.config().max_seq_len;
    if prefix.len() >= max_len {
        return Err(ModelError::SequenceTooLong {
            len: prefix.len(),
            max: max_len,
        });
    }
    let eos = vocab.special(Special::Eos);
    let mut state = params.decode_state();
    let mut logits = vec![];
    for &t in prefix {
        logits = params.decode_step(&mut state, t)?;
    }
    let mut out = Vec::new();
    for _ in 0..max_new {
        let next = argmax_lowest(&logits);
        if next == eos {
            break;
        }
        if vocab.text.contains(&next) {
            out.push(next);
        }
        if prefix.len() + out.len() + 1 >= max_len {
            break;
        }
        logits = params.decode_step(&mut state, next)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Backbone, ModelConfig};
    use crate::vocab::build_vocab;

    #[test]
    fn ties_break_to_lowest_id() {
        let row = vec![0.0f64, 1.0, 1.0, 0.5];
        assert_eq!(argmax_lowest(&row), 1);
        let row = vec![2.0f64, 2.0];
        assert_eq!(argmax_lowest(&row), 0);
    }

    #[test]
    fn forced_logits_repeat_one_token() {
        // Zero the whole model, then bias the head toward one text token.
        // Every step then emits that token until max_new.
        let vocab = build_vocab();
        let cfg = ModelConfig {
            backbone: Backbone::Transformer,
            d_model: 8,
            n_layers: 1,
            n_heads: 1,
            d_state: 4,
            max_seq_len: 64,
            vocab_size: vocab.size(),
            dropout_rate: 0.0,
        };
        let mut params = ModelParams::<f64>::init(&cfg, 1).unwrap();
        for t in params.tensors_mut() {
            t.zero();
        }
        let k = vocab.text_token('k').unwrap();
        if let ModelParams::Transformer(p) = &mut params {
            // Final LN bias of 1 feeds the head; one head row positive.
            for v in p.lnf_bias.data.iter_mut() {
                *v = 1.0;
            }
            for v in p.w_head.row_mut(k as usize) {
                *v = 1.0;
            }
        }
        let prefix = vec![vocab.special(Special::Bos)];
        let out = generate_greedy(&params, &prefix, 10, &vocab).unwrap();
        assert_eq!(out, vec![k; 10]);
    }

    #[test]
    fn identical_prefixes_decode_identically() {
        let vocab = build_vocab();
        let cfg = ModelConfig {
            backbone: Backbone::Ssm,
            d_model: 12,
            n_layers: 1,
            n_heads: 1,
            d_state: 4,
            max_seq_len: 64,
            vocab_size: vocab.size(),
            dropout_rate: 0.0,
        };
        let params = ModelParams::<f64>::init(&cfg, 7).unwrap();
        let prefix = vec![vocab.special(Special::Bos), vocab.audio_token(3), vocab.sep(crate::vocab::Modality::Text)];
        let a = generate_greedy(&params, &prefix, 16, &vocab).unwrap();
        let b = generate_greedy(&params, &prefix, 16, &vocab).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn long_prefix_is_rejected() {
        let vocab = build_vocab();
        let cfg = ModelConfig {
            backbone: Backbone::Transformer,
            d_model: 8,
            n_layers: 1,
            n_heads: 1,
            d_state: 4,
            max_seq_len: 8,
            vocab_size: vocab.size(),
            dropout_rate: 0.0,
        };
        let params = ModelParams::<f64>::init(&cfg, 1).unwrap();
        let prefix = vec![0 as Token; 8];
        assert!(matches!(
            generate_greedy(&params, &prefix, 4, &vocab),
            Err(ModelError::SequenceTooLong { .. })
        ));
    }
}
