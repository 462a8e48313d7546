//! The surrogate noise channel.
//!
//! Real noise mixing is replaced by a discrete channel: within the second
//! half of each utterance, every audio token is independently replaced by a
//! uniform codebook draw with probability `p = 1 / (1 + 10^(SNR/10))`, the
//! noise power fraction at that SNR. 0 dB therefore corrupts with probability
//! exactly one half, and the first half of every utterance is never touched.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::glyphs::AUDIO_CODEBOOK;
use super::{example_sentences, CorpusError, Example, SENTENCE_SEP};
use crate::rng::{shuffle, stream, sub_seed};
use crate::vocab::{Token, VocabLayout};

/// An SNR level and its derived corruption probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub p_corrupt: f64,
}

impl NoiseSpec {
    pub fn from_snr_db(snr_db: f64) -> Self {
        Self {
            snr_db,
            p_corrupt: snr_to_corruption(snr_db),
        }
    }
}

/// Map an SNR in dB to the token corruption probability.
pub fn snr_to_corruption(snr_db: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf(snr_db / 10.0))
}

/// Corrupt the second half (rounded down) of each utterance span. Tokens in
/// first halves are returned unmodified for any probability.
pub fn inject_audio_noise(
    audio: &[Token],
    utterance_spans: &[[usize; 2]],
    p_corrupt: f64,
    rng: &mut ChaCha8Rng,
    vocab: &VocabLayout,
) -> Vec<Token> {
    debug_assert!(spans_partition(utterance_spans, audio.len()));
    let mut out = audio.to_vec();
    for &[start, end] in utterance_spans {
        let half = (end - start) / 2;
        for slot in &mut out[end - half..end] {
            if rng.gen::<f64>() < p_corrupt {
                *slot = vocab.audio_token(rng.gen_range(0..AUDIO_CODEBOOK));
            }
        }
    }
    out
}

fn spans_partition(spans: &[[usize; 2]], len: usize) -> bool {
    let mut cursor = 0;
    for &[s, e] in spans {
        if s != cursor || e < s {
            return false;
        }
        cursor = e;
    }
    cursor == len
}

/// Seed for re-noising one example at one SNR. Independent of the model under
/// test, so every model sees identical corrupted audio for a given cell.
pub fn noise_seed(corpus_seed: u64, scope: &str, example_index: u64, snr_db: f64) -> u64 {
    sub_seed(sub_seed(corpus_seed, scope, snr_db.to_bits()), "ex", example_index)
}

/// Clone an example with its audio passed through the noise channel.
pub fn noisy_variant(
    example: &Example,
    snr_db: f64,
    seed: u64,
    vocab: &VocabLayout,
) -> Example {
    let spec = NoiseSpec::from_snr_db(snr_db);
    let mut rng = stream(seed);
    let mut out = example.clone();
    out.audio = inject_audio_noise(
        &example.audio,
        &example.utterance_spans,
        spec.p_corrupt,
        &mut rng,
        vocab,
    );
    out
}

/// Dilute the oracle OCR stream with `k` distractor sentences drawn from
/// other examples. The original three sentences are kept, the combined set is
/// shuffled, and every other field is left unchanged. `k = 0` returns the
/// example as-is.
pub fn add_sequence_noise(
    example: &Example,
    distractor_pool: &[String],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Example, CorpusError> {
    if k == 0 {
        return Ok(example.clone());
    }
    let own = example_sentences(example)?;
    let mut candidates: Vec<&String> = distractor_pool
        .iter()
        .filter(|s| !own.contains(s))
        .collect();
    if candidates.len() < k {
        return Err(CorpusError::InsufficientPool {
            need: k,
            have: candidates.len(),
        });
    }
    let mut picked: Vec<String> = Vec::with_capacity(k);
    for _ in 0..k {
        let i = rng.gen_range(0..candidates.len());
        let s = candidates.swap_remove(i);
        picked.push(s.clone());
        // A sentence may repeat in the pool; keep the picks distinct.
        candidates.retain(|c| *c != &picked[picked.len() - 1]);
    }
    let mut sentences = own;
    sentences.extend(picked);
    shuffle(rng, &mut sentences);
    let mut out = example.clone();
    out.oracle_ocr = sentences.join(&format!(" {SENTENCE_SEP} "));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_example, CorpusConfig};
    use crate::vocab::build_vocab;

    fn sample(seed: u64) -> Example {
        let vocab = build_vocab();
        gen_example(&mut stream(seed), "t", &CorpusConfig::default(), &vocab).unwrap()
    }

    #[test]
    fn zero_db_maps_to_exactly_half() {
        assert_eq!(snr_to_corruption(0.0), 0.5);
    }

    #[test]
    fn corruption_probability_is_strictly_decreasing() {
        let grid = [20.0, 10.0, 5.0, 2.5, 0.0, -5.0, -10.0, -20.0];
        for w in grid.windows(2) {
            assert!(snr_to_corruption(w[0]) < snr_to_corruption(w[1]));
        }
    }

    #[test]
    fn zero_probability_is_identity() {
        let vocab = build_vocab();
        let ex = sample(1);
        let out = inject_audio_noise(
            &ex.audio,
            &ex.utterance_spans,
            0.0,
            &mut stream(9),
            &vocab,
        );
        assert_eq!(out, ex.audio);
    }

    #[test]
    fn first_halves_survive_total_corruption() {
        let vocab = build_vocab();
        let ex = sample(2);
        let out = inject_audio_noise(
            &ex.audio,
            &ex.utterance_spans,
            1.0,
            &mut stream(9),
            &vocab,
        );
        for &[s, e] in &ex.utterance_spans {
            let half = (e - s) / 2;
            assert_eq!(out[s..e - half], ex.audio[s..e - half]);
            for &t in &out[e - half..e] {
                assert!(vocab.audio_code(t).is_some());
            }
        }
    }

    #[test]
    fn sequence_noise_keeps_other_fields_and_k0_is_identity() {
        let ex = sample(3);
        let pool: Vec<String> = (10..40)
            .map(|s| example_sentences(&sample(s)).unwrap())
            .flatten()
            .collect();
        assert_eq!(
            add_sequence_noise(&ex, &pool, 0, &mut stream(1)).unwrap(),
            ex
        );
        let noised = add_sequence_noise(&ex, &pool, 7, &mut stream(1)).unwrap();
        assert_eq!(noised.audio, ex.audio);
        assert_eq!(noised.ocr, ex.ocr);
        assert_eq!(noised.transcript, ex.transcript);
        let sentences: Vec<&str> = noised.oracle_ocr.split(" stop ").collect();
        assert_eq!(sentences.len(), 10);
        for s in example_sentences(&ex).unwrap() {
            assert!(sentences.contains(&s.as_str()));
        }
    }

    #[test]
    fn sequence_noise_rejects_a_thin_pool() {
        let ex = sample(4);
        let pool = example_sentences(&sample(5)).unwrap();
        assert!(matches!(
            add_sequence_noise(&ex, &pool, 7, &mut stream(1)),
            Err(CorpusError::InsufficientPool { .. })
        ));
    }

    #[test]
    fn injected_sentences_come_from_other_examples() {
        let ex = sample(6);
        let pool: Vec<String> = (20..60)
            .flat_map(|s| example_sentences(&sample(s)).unwrap())
            .collect();
        let noised = add_sequence_noise(&ex, &pool, 7, &mut stream(2)).unwrap();
        let own = example_sentences(&ex).unwrap();
        let mut extra = 0;
        for s in noised.oracle_ocr.split(" stop ") {
            if !own.iter().any(|o| o == s) {
                assert!(pool.iter().any(|p| p == s));
                extra += 1;
            }
        }
        assert_eq!(extra, 7);
    }
}
