//! Packing modality streams into a single decoder input sequence.
//!
//! Blocked mode emits `BOS (SEP(m) <m tokens>)* SEP(text) <transcript> EOS`
//! in the configured modality order. Interleaved mode alternates chunks of
//! one visual modality with contiguous audio parts. Span annotations assign
//! every position to a modality so the loss can be weighted per modality.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Example;
use crate::vocab::{Modality, Special, Token, VocabLayout};

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("character {0:?} cannot be tokenized into the text range")]
    UnsupportedChar(char),
    #[error("modality {0} is not available for this operation")]
    ModalityUnavailable(Modality),
    #[error("invalid assembly config: {0}")]
    InvalidConfig(String),
    #[error("cannot split {len} audio tokens into {chunks} parts")]
    InterleaveTooFine { len: usize, chunks: usize },
    #[error("swap permutation must be the identity or a derangement")]
    BadPermutation,
    #[error("batch has {batch} layouts but {examples} examples")]
    BatchMismatch { batch: usize, examples: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterleaveMode {
    Blocked,
    Interleaved,
}

/// How an example becomes a model input sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblyConfig {
    /// Input modalities in presentation order; the text label always comes
    /// last and is not listed here.
    pub modality_order: Vec<Modality>,
    pub interleave: InterleaveMode,
    /// Number of visual/audio chunk pairs in interleaved mode.
    pub interleave_chunks: usize,
    /// When set, the ocr slot carries the oracle OCR text.
    pub include_oracle: bool,
}

impl AssemblyConfig {
    pub fn blocked(modality_order: Vec<Modality>) -> Self {
        Self {
            modality_order,
            interleave: InterleaveMode::Blocked,
            interleave_chunks: 1,
            include_oracle: false,
        }
    }

    pub fn validate(&self) -> Result<(), AssemblyError> {
        let err = |m: String| Err(AssemblyError::InvalidConfig(m));
        if self.modality_order.contains(&Modality::Text) {
            return err("text is the label, not an input modality".into());
        }
        if !self.modality_order.contains(&Modality::Audio) {
            return err("audio must be present in every ASR config".into());
        }
        let mut seen = Vec::new();
        for &m in &self.modality_order {
            if seen.contains(&m) {
                return err(format!("modality {m} listed twice"));
            }
            seen.push(m);
        }
        if self.interleave == InterleaveMode::Interleaved {
            if self.modality_order.len() != 2 {
                return err("interleaved mode takes exactly one visual modality plus audio".into());
            }
            if self.interleave_chunks == 0 {
                return err("interleave_chunks must be positive".into());
            }
        }
        Ok(())
    }

    /// Short tag like "O+A" or "Oo7+A"; `k` is the sequence-noise count.
    pub fn modality_tag(&self, sequence_noise_k: usize) -> String {
        self.modality_order
            .iter()
            .map(|m| match m {
                Modality::Audio => "A".to_string(),
                Modality::Lip => "L".to_string(),
                Modality::Image => "I".to_string(),
                Modality::Raster => "R".to_string(),
                Modality::Ocr if self.include_oracle && sequence_noise_k > 0 => {
                    format!("Oo{sequence_noise_k}")
                }
                Modality::Ocr if self.include_oracle => "Oo".to_string(),
                Modality::Ocr => "O".to_string(),
                Modality::Text => "T".to_string(),
            })
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// An assembled model input: tokens, per-modality spans, and the target mask.
/// `target_mask[t]` is true exactly when token `t + 1` exists, i.e. position
/// `t` makes a scored next-token prediction. At inference the prefix is
/// `tokens[..text_start]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceLayout {
    pub tokens: Vec<Token>,
    pub spans: Vec<(Modality, usize, usize)>,
    pub target_mask: Vec<bool>,
    pub text_start: usize,
}

impl SequenceLayout {
    /// Modality of each position, expanded from the spans.
    pub fn token_modalities(&self) -> Vec<Modality> {
        let mut out = vec![Modality::Text; self.tokens.len()];
        for &(m, start, end) in &self.spans {
            for slot in &mut out[start..end] {
                *slot = m;
            }
        }
        out
    }

    /// Tokens of the first span of modality `m`, separator excluded.
    pub fn span_content(&self, m: Modality) -> Option<&[Token]> {
        self.spans
            .iter()
            .find(|&&(sm, _, _)| sm == m)
            .map(|&(_, s, e)| &self.tokens[s..e])
    }
}

/// Tokenize a string character-by-character into the text range.
pub fn tokenize_text(s: &str, vocab: &VocabLayout) -> Result<Vec<Token>, AssemblyError> {
    s.chars()
        .map(|c| vocab.text_token(c).ok_or(AssemblyError::UnsupportedChar(c)))
        .collect()
}

/// Drop non-text tokens and map the rest back to characters.
pub fn detokenize_text(tokens: &[Token], vocab: &VocabLayout) -> String {
    tokens.iter().filter_map(|&t| vocab.text_char(t)).collect()
}

fn slot_stream(example: &Example, m: Modality, cfg: &AssemblyConfig, vocab: &VocabLayout)
    -> Result<Vec<Token>, AssemblyError>
{
    match m {
        Modality::Audio => Ok(example.audio.clone()),
        Modality::Lip => Ok(example.lips.clone()),
        Modality::Image => Ok(example.image.clone()),
        Modality::Raster => Ok(example.raster.clone()),
        Modality::Ocr => {
            let text = if cfg.include_oracle {
                &example.oracle_ocr
            } else {
                &example.ocr
            };
            tokenize_text(text, vocab)
        }
        Modality::Text => Err(AssemblyError::ModalityUnavailable(Modality::Text)),
    }
}

/// Split `items` into `n` contiguous near-equal parts, longer parts first.
fn split_near_equal(items: &[Token], n: usize) -> Vec<Vec<Token>> {
    let base = items.len() / n;
    let rem = items.len() % n;
    let mut out = Vec::with_capacity(n);
    let mut cursor = 0;
    for i in 0..n {
        let size = base + usize::from(i < rem);
        out.push(items[cursor..cursor + size].to_vec());
        cursor += size;
    }
    out
}

/// Interleave visual chunks with contiguous audio parts:
/// `c0 a0 c1 a1 ... c(n-1) a(n-1)`. Audio parts are near-equal in size
/// (difference at most one, longer parts first), so concatenating them in
/// order recovers the original audio.
pub fn interleave(
    visual_chunks: &[Vec<Token>],
    audio: &[Token],
    n: usize,
) -> Result<Vec<Token>, AssemblyError> {
    if n != visual_chunks.len() {
        return Err(AssemblyError::InvalidConfig(format!(
            "expected {n} visual chunks, got {}",
            visual_chunks.len()
        )));
    }
    if n == 0 || audio.len() < n {
        return Err(AssemblyError::InterleaveTooFine {
            len: audio.len(),
            chunks: n,
        });
    }
    let parts = split_near_equal(audio, n);
    let mut out = Vec::with_capacity(audio.len() + visual_chunks.iter().map(Vec::len).sum::<usize>());
    for (chunk, part) in visual_chunks.iter().zip(&parts) {
        out.extend_from_slice(chunk);
        out.extend_from_slice(part);
    }
    Ok(out)
}

/// Assemble one example into a model input sequence.
pub fn assemble(
    example: &Example,
    cfg: &AssemblyConfig,
    vocab: &VocabLayout,
) -> Result<SequenceLayout, AssemblyError> {
    cfg.validate()?;
    let mut tokens = vec![vocab.special(Special::Bos)];
    let mut spans: Vec<(Modality, usize, usize)> = Vec::new();

    match cfg.interleave {
        InterleaveMode::Blocked => {
            for &m in &cfg.modality_order {
                let start = if spans.is_empty() { 0 } else { tokens.len() };
                tokens.push(vocab.sep(m));
                tokens.extend(slot_stream(example, m, cfg, vocab)?);
                spans.push((m, start, tokens.len()));
            }
        }
        InterleaveMode::Interleaved => {
            let visual = cfg.modality_order[if cfg.modality_order[0] == Modality::Audio { 1 } else { 0 }];
            let vis_stream = slot_stream(example, visual, cfg, vocab)?;
            let audio = slot_stream(example, Modality::Audio, cfg, vocab)?;
            let n = cfg.interleave_chunks;
            if audio.len() < n || vis_stream.len() < n {
                return Err(AssemblyError::InterleaveTooFine {
                    len: audio.len().min(vis_stream.len()),
                    chunks: n,
                });
            }
            let vis_chunks = split_near_equal(&vis_stream, n);
            let audio_parts = split_near_equal(&audio, n);
            for (i, (chunk, part)) in vis_chunks.iter().zip(&audio_parts).enumerate() {
                let vis_start = if i == 0 { 0 } else { tokens.len() };
                if i == 0 {
                    tokens.push(vocab.sep(visual));
                }
                tokens.extend_from_slice(chunk);
                spans.push((visual, vis_start, tokens.len()));
                let audio_start = tokens.len();
                if i == 0 {
                    tokens.push(vocab.sep(Modality::Audio));
                }
                tokens.extend_from_slice(part);
                spans.push((Modality::Audio, audio_start, tokens.len()));
            }
        }
    }

    let text_block = tokens.len();
    tokens.push(vocab.sep(Modality::Text));
    let text_start = tokens.len();
    tokens.extend(tokenize_text(&example.transcript, vocab)?);
    tokens.push(vocab.special(Special::Eos));
    spans.push((Modality::Text, text_block, tokens.len()));

    let len = tokens.len();
    let target_mask = (0..len).map(|t| t + 1 < len).collect();
    Ok(SequenceLayout {
        tokens,
        spans,
        target_mask,
        text_start,
    })
}

/// Replace the modality-`m` content of each batch item with the content of
/// the example at `perm[i]`, then reassemble. `perm` must be the identity
/// (sanity mode) or a derangement. Blocks of other modalities come out
/// bit-identical because assembly is deterministic.
pub fn swap_modality(
    batch: &[SequenceLayout],
    examples: &[Example],
    m: Modality,
    perm: &[usize],
    cfg: &AssemblyConfig,
    vocab: &VocabLayout,
) -> Result<Vec<SequenceLayout>, AssemblyError> {
    if batch.len() != examples.len() {
        return Err(AssemblyError::BatchMismatch {
            batch: batch.len(),
            examples: examples.len(),
        });
    }
    if m == Modality::Text {
        return Err(AssemblyError::ModalityUnavailable(m));
    }
    validate_perm(perm, examples.len())?;

    let mut out = Vec::with_capacity(examples.len());
    for (i, example) in examples.iter().enumerate() {
        let donor = &examples[perm[i]];
        let mut hybrid = example.clone();
        match m {
            Modality::Audio => {
                hybrid.audio = donor.audio.clone();
                hybrid.utterance_spans = donor.utterance_spans;
            }
            Modality::Lip => hybrid.lips = donor.lips.clone(),
            Modality::Image => hybrid.image = donor.image.clone(),
            Modality::Raster => hybrid.raster = donor.raster.clone(),
            Modality::Ocr => {
                hybrid.ocr = donor.ocr.clone();
                hybrid.oracle_ocr = donor.oracle_ocr.clone();
            }
            Modality::Text => unreachable!(),
        }
        out.push(assemble(&hybrid, cfg, vocab)?);
    }
    Ok(out)
}

fn validate_perm(perm: &[usize], n: usize) -> Result<(), AssemblyError> {
    if perm.len() != n {
        return Err(AssemblyError::BadPermutation);
    }
    let mut seen = vec![false; n];
    for &j in perm {
        if j >= n || seen[j] {
            return Err(AssemblyError::BadPermutation);
        }
        seen[j] = true;
    }
    let identity = perm.iter().enumerate().all(|(i, &j)| i == j);
    let deranged = perm.iter().enumerate().all(|(i, &j)| i != j);
    if identity || deranged {
        Ok(())
    } else {
        Err(AssemblyError::BadPermutation)
    }
}
