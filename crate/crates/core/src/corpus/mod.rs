//! Deterministic generation of the synthetic three-equations corpus.
//!
//! Each example shows three arithmetic equations; a speaker reads two of
//! them. Every modality stream (audio, lips, image, OCR, oracle OCR, raster)
//! derives from the equations through fixed encoders, and audio corruption is
//! driven by an SNR-derived per-token replacement probability.

pub mod glyphs;
pub mod io;
pub mod lexicon;
pub mod noise;
pub mod streams;

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::{Token, VocabLayout};

pub use lexicon::number_words;
pub use noise::{
    add_sequence_noise, inject_audio_noise, noise_seed, noisy_variant, snr_to_corruption,
    NoiseSpec,
};
pub use streams::{audio_tokens, image_tokens, lip_tokens, ocr_text, oracle_ocr, raster};

/// Word placed between sentences in the OCR/oracle-OCR streams.
pub const SENTENCE_SEP: &str = "stop";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("character {0:?} is outside the supported alphabet")]
    UnsupportedChar(char),
    #[error("value {0} is outside the 0-9999 number lexicon")]
    LexiconRange(u32),
    #[error("equation rendering is {len} cells wide, grid allows {cols}")]
    EquationTooWide { len: usize, cols: usize },
    #[error("distractor pool has {have} usable sentences, need {need}")]
    InsufficientPool { need: usize, have: usize },
    #[error("invalid corpus config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("split {split}: stored hash {expected} does not match recomputed {actual}")]
    HashMismatch {
        split: String,
        expected: String,
        actual: String,
    },
}

/// Arithmetic operator of an equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Plus,
    Minus,
    Times,
}

impl Op {
    pub fn word(self) -> &'static str {
        match self {
            Op::Plus => "plus",
            Op::Minus => "minus",
            Op::Times => "times",
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Op::Plus => '+',
            Op::Minus => '-',
            Op::Times => '*',
        }
    }

    pub fn apply(self, a: u32, b: u32) -> u32 {
        match self {
            Op::Plus => a + b,
            Op::Minus => a - b,
            Op::Times => a * b,
        }
    }
}

/// One displayed equation with its computed result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Equation {
    pub lhs_a: u32,
    pub op: Op,
    pub lhs_b: u32,
    pub rhs: u32,
}

impl Equation {
    /// Symbolic rendering used by the image and raster encoders, e.g. "7+5=12".
    pub fn render(&self) -> String {
        format!("{}{}{}={}", self.lhs_a, self.op.symbol(), self.lhs_b, self.rhs)
    }
}

/// One corpus example with all modality streams. Audio is stored clean;
/// noise is injected downstream from an SNR and a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub equations: Vec<Equation>,
    pub spoken_indices: [usize; 2],
    pub transcript: String,
    pub audio: Vec<Token>,
    pub lips: Vec<Token>,
    pub image: Vec<Token>,
    pub ocr: String,
    pub oracle_ocr: String,
    pub raster: Vec<Token>,
    pub utterance_spans: [[usize; 2]; 2],
}

/// Generation parameters for one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Audio tokens emitted per transcript character.
    pub audio_dup: usize,
    /// Per-character OCR substitution probability.
    pub p_ocr: f64,
    /// Per-cell image blur probability.
    pub p_img_blur: f64,
    pub raster_rows: usize,
    pub raster_cols: usize,
    pub train_snr_set: Vec<f64>,
    pub test_snr_set: Vec<f64>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_train: 8000,
            n_val: 1000,
            n_test: 1000,
            seed: 42,
            audio_dup: 2,
            p_ocr: 0.05,
            p_img_blur: 0.1,
            raster_rows: 8,
            raster_cols: 31,
            train_snr_set: vec![20.0, 10.0, 5.0, 0.0, -5.0, -10.0, -20.0],
            test_snr_set: vec![20.0, 10.0, 5.0, 2.5, 0.0, -5.0, -10.0, -20.0],
        }
    }
}

/// Widest possible equation rendering: "99*99=9801".
pub const MAX_RENDER_LEN: usize = 10;

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let err = |msg: String| Err(CorpusError::InvalidConfig(msg));
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return err("split sizes must be positive".into());
        }
        if self.audio_dup == 0 {
            return err("audio_dup must be positive".into());
        }
        for (name, p) in [("p_ocr", self.p_ocr), ("p_img_blur", self.p_img_blur)] {
            if !(0.0..=1.0).contains(&p) {
                return err(format!("{name}={p} is not a probability"));
            }
        }
        if self.raster_cols < MAX_RENDER_LEN {
            return err(format!(
                "raster_cols={} cannot hold a {MAX_RENDER_LEN}-cell equation",
                self.raster_cols
            ));
        }
        if self.raster_rows < 3 {
            return err("raster_rows must be at least 3".into());
        }
        if self.train_snr_set.is_empty() || self.test_snr_set.is_empty() {
            return err("SNR sets must be non-empty".into());
        }
        Ok(())
    }
}

/// Draw one equation: operands uniform in 0-99, operator uniform over the
/// three kinds. Subtraction operands are swapped when needed so the result
/// stays non-negative.
pub fn gen_equation(rng: &mut ChaCha8Rng) -> Equation {
    let a: u32 = rng.gen_range(0..=99);
    let b: u32 = rng.gen_range(0..=99);
    let op = [Op::Plus, Op::Minus, Op::Times][rng.gen_range(0..3usize)];
    let (a, b) = if op == Op::Minus && b > a { (b, a) } else { (a, b) };
    Equation {
        lhs_a: a,
        op,
        lhs_b: b,
        rhs: op.apply(a, b),
    }
}

/// English reading of an equation, e.g. "seven plus five equals twelve".
pub fn spoken_form(eq: &Equation) -> Result<String, CorpusError> {
    Ok(format!(
        "{} {} {} equals {}",
        number_words(eq.lhs_a)?,
        eq.op.word(),
        number_words(eq.lhs_b)?,
        number_words(eq.rhs)?
    ))
}

/// Generate a full example. The two spoken equations are chosen uniformly
/// among the three unordered pairs and read in ascending display order.
pub fn gen_example(
    rng: &mut ChaCha8Rng,
    id: impl Into<String>,
    config: &CorpusConfig,
    vocab: &VocabLayout,
) -> Result<Example, CorpusError> {
    let equations: Vec<Equation> = (0..3).map(|_| gen_equation(rng)).collect();
    let spoken_indices = [[0, 1], [0, 2], [1, 2]][rng.gen_range(0..3usize)];

    let first = spoken_form(&equations[spoken_indices[0]])?;
    let second = spoken_form(&equations[spoken_indices[1]])?;
    let transcript = format!("{first} {second}");

    let audio = audio_tokens(&transcript, config.audio_dup, vocab)?;
    let lips = lip_tokens(&transcript, vocab)?;
    // The joining space is counted with the first utterance.
    let split = config.audio_dup * (first.chars().count() + 1);
    let utterance_spans = [[0, split], [split, audio.len()]];

    let image = image_tokens(&equations, config.p_img_blur, rng, vocab)?;
    let ocr = ocr_text(&equations, config.p_ocr, rng)?;
    let oracle_ocr = oracle_ocr(&equations)?;
    let raster = raster(
        &equations,
        config.raster_rows,
        config.raster_cols,
        rng,
        vocab,
    )?;

    Ok(Example {
        id: id.into(),
        equations,
        spoken_indices,
        transcript,
        audio,
        lips,
        image,
        ocr,
        oracle_ocr,
        raster,
        utterance_spans,
    })
}

/// Oracle sentences of an example: the spoken forms of all three equations.
pub fn example_sentences(example: &Example) -> Result<Vec<String>, CorpusError> {
    example.equations.iter().map(spoken_form).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::vocab::build_vocab;

    #[test]
    fn equation_arithmetic_holds() {
        let mut rng = stream(5);
        for _ in 0..2000 {
            let eq = gen_equation(&mut rng);
            assert_eq!(eq.rhs, eq.op.apply(eq.lhs_a, eq.lhs_b));
            assert!(eq.lhs_a <= 99 && eq.lhs_b <= 99);
            if eq.op == Op::Minus {
                assert!(eq.lhs_a >= eq.lhs_b);
            }
        }
    }

    #[test]
    fn spoken_form_matches_lexicon() {
        let eq = Equation { lhs_a: 7, op: Op::Plus, lhs_b: 5, rhs: 12 };
        assert_eq!(spoken_form(&eq).unwrap(), "seven plus five equals twelve");
        let eq = Equation { lhs_a: 40, op: Op::Minus, lhs_b: 0, rhs: 40 };
        assert_eq!(spoken_form(&eq).unwrap(), "forty minus zero equals forty");
    }

    #[test]
    fn example_is_deterministic_for_a_seed() {
        let vocab = build_vocab();
        let cfg = CorpusConfig::default();
        let a = gen_example(&mut stream(99), "x", &cfg, &vocab).unwrap();
        let b = gen_example(&mut stream(99), "x", &cfg, &vocab).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn example_invariants_hold() {
        let vocab = build_vocab();
        let cfg = CorpusConfig::default();
        let mut rng = stream(7);
        for i in 0..200 {
            let ex = gen_example(&mut rng, format!("t-{i}"), &cfg, &vocab).unwrap();
            let [i0, i1] = ex.spoken_indices;
            assert!(i0 < i1 && i1 < 3);
            let expect = format!(
                "{} {}",
                spoken_form(&ex.equations[i0]).unwrap(),
                spoken_form(&ex.equations[i1]).unwrap()
            );
            assert_eq!(ex.transcript, expect);
            let chars = ex.transcript.chars().count();
            assert_eq!(ex.lips.len(), chars);
            assert_eq!(ex.audio.len(), cfg.audio_dup * chars);
            let [[s0, e0], [s1, e1]] = ex.utterance_spans;
            assert_eq!(s0, 0);
            assert_eq!(e0, s1);
            assert_eq!(e1, ex.audio.len());
            assert!(e0 > s0 && e1 > s1);
            for idx in 0..3 {
                let sf = spoken_form(&ex.equations[idx]).unwrap();
                assert!(ex.oracle_ocr.contains(&sf));
            }
        }
    }
}
