//! Model evaluation: transcription, corpus WER, and perceptual scores.

use rand_chacha::ChaCha8Rng;

use crate::assembly::{assemble, detokenize_text, swap_modality, AssemblyConfig, SequenceLayout};
use crate::corpus::Example;
use crate::metrics::{corpus_wer, MetricsError, WerResult};
use crate::model::{generate_greedy, ModelParams, Real};
use crate::vocab::{Modality, VocabLayout};

/// Anything that can turn an assembled sequence into a transcription. The
/// trained backbones implement it via greedy decoding; tests can plug in
/// hand-built lookups.
pub trait Transcriber {
    fn transcribe(&self, seq: &SequenceLayout, vocab: &VocabLayout, max_new: usize) -> String;
}

impl<F: Real> Transcriber for ModelParams<F> {
    fn transcribe(&self, seq: &SequenceLayout, vocab: &VocabLayout, max_new: usize) -> String {
        let prefix = &seq.tokens[..seq.text_start];
        match generate_greedy(self, prefix, max_new, vocab) {
            Ok(tokens) => detokenize_text(&tokens, vocab),
            Err(_) => String::new(),
        }
    }
}

/// Pooled WER of a transcriber over pre-assembled sequences.
pub fn evaluate_wer<T: Transcriber + ?Sized>(
    model: &T,
    seqs: &[SequenceLayout],
    references: &[String],
    vocab: &VocabLayout,
    max_new: usize,
) -> Result<WerResult, MetricsError> {
    let pairs: Vec<(String, String)> = seqs
        .iter()
        .zip(references)
        .map(|(seq, reference)| (reference.clone(), model.transcribe(seq, vocab, max_new)))
        .collect();
    corpus_wer(&pairs)
}

/// Perceptual score of modality `m`: the fractional WER increase when that
/// modality's content is swapped across examples with a random derangement,
/// averaged over `n_rounds` derangements. Zero when the model never consumes
/// the modality; errors when the unswapped WER is zero.
#[allow(clippy::too_many_arguments)]
pub fn perceptual_score<T: Transcriber + ?Sized>(
    model: &T,
    examples: &[Example],
    references: &[String],
    cfg: &AssemblyConfig,
    vocab: &VocabLayout,
    m: Modality,
    rng: &mut ChaCha8Rng,
    n_rounds: usize,
    max_new: usize,
) -> Result<f64, PsError> {
    let batch: Vec<SequenceLayout> = examples
        .iter()
        .map(|e| assemble(e, cfg, vocab))
        .collect::<Result<_, _>>()
        .map_err(PsError::Assembly)?;
    let base = evaluate_wer(model, &batch, references, vocab, max_new).map_err(PsError::Metrics)?;
    if base.wer == 0.0 {
        return Err(PsError::ZeroBaseWer);
    }
    let mut total = 0.0;
    for _ in 0..n_rounds {
        let perm = crate::rng::derangement(rng, examples.len());
        let swapped = swap_modality(&batch, examples, m, &perm, cfg, vocab)
            .map_err(PsError::Assembly)?;
        let wer = evaluate_wer(model, &swapped, references, vocab, max_new)
            .map_err(PsError::Metrics)?;
        total += (wer.wer - base.wer) / base.wer;
    }
    Ok(total / n_rounds as f64)
}

#[derive(Debug, thiserror::Error)]
pub enum PsError {
    #[error("unswapped WER is zero; the perceptual score ratio is undefined")]
    ZeroBaseWer,
    #[error(transparent)]
    Assembly(crate::assembly::AssemblyError),
    #[error(transparent)]
    Metrics(MetricsError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::AssemblyConfig;
    use crate::corpus::{gen_example, CorpusConfig};
    use crate::rng::stream;
    use crate::vocab::build_vocab;

    /// Reads the first two sentences of the ocr slot and nothing else.
    struct OcrLookup;

    impl Transcriber for OcrLookup {
        fn transcribe(&self, seq: &SequenceLayout, vocab: &VocabLayout, _max_new: usize) -> String {
            let block = seq.span_content(Modality::Ocr).unwrap_or(&[]);
            let text = detokenize_text(block, vocab);
            let sentences: Vec<&str> = text.split(" stop ").collect();
            sentences[..2.min(sentences.len())].join(" ")
        }
    }

    /// Always answers the same string regardless of input.
    struct Constant;

    impl Transcriber for Constant {
        fn transcribe(&self, _: &SequenceLayout, _: &VocabLayout, _: usize) -> String {
            "seven plus five equals twelve".into()
        }
    }

    fn fixtures(n: usize) -> (Vec<Example>, Vec<String>) {
        let vocab = build_vocab();
        let cfg = CorpusConfig::default();
        let examples: Vec<Example> = (0..n)
            .map(|i| gen_example(&mut stream(100 + i as u64), format!("e{i}"), &cfg, &vocab).unwrap())
            .collect();
        let refs = examples.iter().map(|e| e.transcript.clone()).collect();
        (examples, refs)
    }

    #[test]
    fn ps_of_unconsumed_modality_is_zero() {
        let vocab = build_vocab();
        let (examples, refs) = fixtures(8);
        // Assembly includes only lips and audio; swapping images can't
        // change anything the transcriber sees.
        let cfg = AssemblyConfig::blocked(vec![Modality::Lip, Modality::Audio]);
        let ps = perceptual_score(
            &Constant,
            &examples,
            &refs,
            &cfg,
            &vocab,
            Modality::Image,
            &mut stream(5),
            3,
            64,
        )
        .unwrap();
        assert_eq!(ps, 0.0);
    }

    #[test]
    fn ps_separates_used_from_unused_modalities() {
        let vocab = build_vocab();
        let (examples, refs) = fixtures(10);
        let mut cfg = AssemblyConfig::blocked(vec![Modality::Ocr, Modality::Audio]);
        cfg.include_oracle = true;
        let ps_ocr = perceptual_score(
            &OcrLookup, &examples, &refs, &cfg, &vocab, Modality::Ocr,
            &mut stream(7), 3, 64,
        )
        .unwrap();
        let ps_audio = perceptual_score(
            &OcrLookup, &examples, &refs, &cfg, &vocab, Modality::Audio,
            &mut stream(7), 3, 64,
        )
        .unwrap();
        assert!(ps_ocr > 0.0, "swapping consumed oracle text must hurt, got {ps_ocr}");
        assert_eq!(ps_audio, 0.0);
    }
}
