//! Per-modality token encoders.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::glyphs::{self, IMG_EQ_CELLS};
use super::{spoken_form, CorpusError, Equation, SENTENCE_SEP};
use crate::vocab::{Special, Token, VocabLayout};

/// Audio stream: each character maps to `dup` copies of its codebook token.
pub fn audio_tokens(
    transcript: &str,
    dup: usize,
    vocab: &VocabLayout,
) -> Result<Vec<Token>, CorpusError> {
    let mut out = Vec::with_capacity(transcript.len() * dup);
    for c in transcript.chars() {
        let code = glyphs::audio_code(c).ok_or(CorpusError::UnsupportedChar(c))?;
        let t = vocab.audio_token(code);
        out.extend(std::iter::repeat(t).take(dup));
    }
    Ok(out)
}

/// Lip stream: one viseme-class token per character. The viseme map is
/// many-to-one, so this stream underdetermines the transcript.
pub fn lip_tokens(transcript: &str, vocab: &VocabLayout) -> Result<Vec<Token>, CorpusError> {
    transcript
        .chars()
        .map(|c| {
            glyphs::viseme_class(c)
                .map(|class| vocab.lip_token(class))
                .ok_or(CorpusError::UnsupportedChar(c))
        })
        .collect()
}

/// Image stream: each equation occupies a fixed 24-cell block starting with
/// a SEP-IMG cell, followed by confusion-class glyph tokens, padded with
/// BLANK. Rendered glyphs are independently replaced by BLUR with probability
/// `p_blur`.
pub fn image_tokens(
    equations: &[Equation],
    p_blur: f64,
    rng: &mut ChaCha8Rng,
    vocab: &VocabLayout,
) -> Result<Vec<Token>, CorpusError> {
    let blank = vocab.special(Special::Blank);
    let blur = vocab.special(Special::Blur);
    let sep = vocab.special(Special::SepImage);
    let mut out = Vec::with_capacity(equations.len() * IMG_EQ_CELLS);
    for eq in equations {
        let rendered = eq.render();
        let len = rendered.chars().count();
        if len + 1 > IMG_EQ_CELLS {
            return Err(CorpusError::EquationTooWide {
                len,
                cols: IMG_EQ_CELLS - 1,
            });
        }
        out.push(sep);
        for c in rendered.chars() {
            let class = glyphs::confusion_class(c).ok_or(CorpusError::UnsupportedChar(c))?;
            let cell = if rng.gen::<f64>() < p_blur {
                blur
            } else {
                vocab.image_token(class)
            };
            out.push(cell);
        }
        out.extend(std::iter::repeat(blank).take(IMG_EQ_CELLS - 1 - len));
    }
    Ok(out)
}

/// Oracle OCR: the spoken forms of all three displayed equations joined by a
/// separator word, in display order, whether or not each was spoken.
pub fn oracle_ocr(equations: &[Equation]) -> Result<String, CorpusError> {
    let sentences: Vec<String> = equations.iter().map(spoken_form).collect::<Result<_, _>>()?;
    Ok(sentences.join(&format!(" {SENTENCE_SEP} ")))
}

/// OCR text: the oracle text with each letter independently substituted by a
/// same-confusion-class letter with probability `p_ocr`. Spaces are never
/// corrupted, so word boundaries survive like they do in word-level OCR
/// output.
pub fn ocr_text(
    equations: &[Equation],
    p_ocr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<String, CorpusError> {
    let clean = oracle_ocr(equations)?;
    let mut out = String::with_capacity(clean.len());
    for c in clean.chars() {
        if c != ' ' && rng.gen::<f64>() < p_ocr {
            let peers = glyphs::letter_peers(c);
            debug_assert!(!peers.is_empty(), "letter {c:?} has no substitution peer");
            out.push(peers[rng.gen_range(0..peers.len())]);
        } else {
            out.push(c);
        }
    }
    Ok(out)
}

/// Raster stream: a rows x cols character grid. Each equation is placed
/// left-aligned on its own randomly chosen row; empty cells hold BLANK and
/// each row is terminated by ROW-END, giving a constant length of
/// rows x (cols + 1).
pub fn raster(
    equations: &[Equation],
    rows: usize,
    cols: usize,
    rng: &mut ChaCha8Rng,
    vocab: &VocabLayout,
) -> Result<Vec<Token>, CorpusError> {
    let blank = vocab.special(Special::Blank);
    let row_end = vocab.special(Special::RowEnd);
    let mut grid = vec![vec![blank; cols]; rows];

    let mut free: Vec<usize> = (0..rows).collect();
    for eq in equations {
        let rendered = eq.render();
        let len = rendered.chars().count();
        if len > cols {
            return Err(CorpusError::EquationTooWide { len, cols });
        }
        let row = free.swap_remove(rng.gen_range(0..free.len()));
        for (col, c) in rendered.chars().enumerate() {
            let glyph = glyphs::raster_glyph_index(c).ok_or(CorpusError::UnsupportedChar(c))?;
            grid[row][col] = vocab.raster_token(glyph);
        }
    }

    let mut out = Vec::with_capacity(rows * (cols + 1));
    for row in grid {
        out.extend(row);
        out.push(row_end);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_equation, CorpusConfig};
    use crate::rng::stream;
    use crate::vocab::build_vocab;

    fn three(seed: u64) -> Vec<Equation> {
        let mut rng = stream(seed);
        (0..3).map(|_| gen_equation(&mut rng)).collect()
    }

    #[test]
    fn audio_empty_and_duplication() {
        let v = build_vocab();
        assert!(audio_tokens("", 2, &v).unwrap().is_empty());
        let toks = audio_tokens("ab", 2, &v).unwrap();
        assert_eq!(toks.len(), 4);
        assert_eq!(toks[0], toks[1]);
        assert_eq!(toks[2], toks[3]);
        assert_ne!(toks[0], toks[2]);
        assert!(matches!(
            audio_tokens("a!b", 1, &v),
            Err(CorpusError::UnsupportedChar('!'))
        ));
    }

    #[test]
    fn audio_round_trips_through_the_code() {
        let v = build_vocab();
        let cfg = CorpusConfig::default();
        let text = "seven plus five equals twelve";
        let toks = audio_tokens(text, cfg.audio_dup, &v).unwrap();
        let decoded: String = toks
            .chunks(cfg.audio_dup)
            .map(|chunk| {
                assert!(chunk.iter().all(|&t| t == chunk[0]));
                glyphs::audio_code_char(v.audio_code(chunk[0]).unwrap()).unwrap()
            })
            .collect();
        assert_eq!(decoded, text);
    }

    #[test]
    fn lips_share_tokens_within_a_viseme_class() {
        let v = build_vocab();
        let toks = lip_tokens("dt", &v).unwrap();
        assert_eq!(toks[0], toks[1]);
        assert_eq!(lip_tokens("abc", &v).unwrap().len(), 3);
    }

    #[test]
    fn image_has_fixed_length_and_confusion_merging() {
        let v = build_vocab();
        let eqs = three(3);
        let toks = image_tokens(&eqs, 0.0, &mut stream(1), &v).unwrap();
        assert_eq!(toks.len(), 3 * IMG_EQ_CELLS);
        // '1' and '7' share a confusion class, as do '1' and 'l'.
        assert_eq!(
            glyphs::confusion_class('1'),
            glyphs::confusion_class('l')
        );
        assert_eq!(
            glyphs::confusion_class('0'),
            glyphs::confusion_class('o')
        );
    }

    #[test]
    fn ocr_with_zero_error_equals_oracle() {
        let eqs = three(9);
        let oracle = oracle_ocr(&eqs).unwrap();
        let ocr = ocr_text(&eqs, 0.0, &mut stream(2)).unwrap();
        assert_eq!(ocr, oracle);
    }

    #[test]
    fn ocr_error_positions_differ_across_seeds() {
        let eqs = three(11);
        let a = ocr_text(&eqs, 0.3, &mut stream(1)).unwrap();
        let b = ocr_text(&eqs, 0.3, &mut stream(2)).unwrap();
        assert_ne!(a, b);
        assert_eq!(a.len(), b.len());
    }

    #[test]
    fn raster_is_invertible_and_constant_length() {
        let v = build_vocab();
        let cfg = CorpusConfig::default();
        for seed in 0..50 {
            let eqs = three(seed);
            let toks = raster(&eqs, cfg.raster_rows, cfg.raster_cols, &mut stream(seed), &v)
                .unwrap();
            assert_eq!(toks.len(), cfg.raster_rows * (cfg.raster_cols + 1));
            // Read back non-blank rows and compare against the renderings.
            let mut rows: Vec<String> = Vec::new();
            for row in toks.chunks(cfg.raster_cols + 1) {
                let s: String = row[..cfg.raster_cols]
                    .iter()
                    .filter_map(|&t| v.raster_glyph(t))
                    .collect();
                if !s.is_empty() {
                    rows.push(s);
                }
            }
            let mut expect: Vec<String> = eqs.iter().map(|e| e.render()).collect();
            rows.sort();
            expect.sort();
            assert_eq!(rows, expect);
        }
    }
}
