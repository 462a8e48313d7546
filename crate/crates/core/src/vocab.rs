//! Partitioned token id space shared by all modalities.
//!
//! Every stream the corpus emits lives in one flat vocabulary so the decoder
//! can process the whole input like text. Ranges are contiguous and disjoint;
//! special tokens sit in their own block after the modality ranges.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::glyphs::{
    self, AUDIO_CODEBOOK, IMAGE_CLASSES, LIP_CLASSES, RASTER_GLYPHS, TEXT_CHARS,
};

/// Token id in the shared vocabulary.
pub type Token = u32;

/// Input/label stream kinds. `Ocr` is the slot that carries either OCR text
/// or oracle OCR text, depending on the assembly config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Audio,
    Lip,
    Image,
    Raster,
    Ocr,
}

impl Modality {
    pub const ALL: [Modality; 6] = [
        Modality::Text,
        Modality::Audio,
        Modality::Lip,
        Modality::Image,
        Modality::Raster,
        Modality::Ocr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Audio => "audio",
            Modality::Lip => "lip",
            Modality::Image => "image",
            Modality::Raster => "raster",
            Modality::Ocr => "ocr",
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Non-content tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Special {
    Bos,
    Eos,
    SepText,
    SepAudio,
    SepLip,
    SepImage,
    SepRaster,
    SepOcr,
    Blur,
    Blank,
    RowEnd,
}

const SPECIALS: [Special; 11] = [
    Special::Bos,
    Special::Eos,
    Special::SepText,
    Special::SepAudio,
    Special::SepLip,
    Special::SepImage,
    Special::SepRaster,
    Special::SepOcr,
    Special::Blur,
    Special::Blank,
    Special::RowEnd,
];

/// What a token id denotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenClass {
    Content(Modality),
    Special(Special),
}

/// The canonical id layout. Construction is deterministic; two layouts built
/// from the same tables are identical.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabLayout {
    pub text: Range<Token>,
    pub audio: Range<Token>,
    pub lip: Range<Token>,
    pub image: Range<Token>,
    pub raster: Range<Token>,
    specials_base: Token,
}

/// Deterministic layout over the fixed corpus tables.
pub fn build_vocab() -> VocabLayout {
    let text_end = TEXT_CHARS as Token;
    let audio_end = text_end + AUDIO_CODEBOOK as Token;
    let lip_end = audio_end + LIP_CLASSES as Token;
    let image_end = lip_end + IMAGE_CLASSES as Token;
    let raster_end = image_end + RASTER_GLYPHS.len() as Token;
    VocabLayout {
        text: 0..text_end,
        audio: text_end..audio_end,
        lip: audio_end..lip_end,
        image: lip_end..image_end,
        raster: image_end..raster_end,
        specials_base: raster_end,
    }
}

impl Default for VocabLayout {
    fn default() -> Self {
        build_vocab()
    }
}

impl VocabLayout {
    /// Total vocabulary size: all ranges plus the special block.
    pub fn size(&self) -> usize {
        self.specials_base as usize + SPECIALS.len()
    }

    pub fn special(&self, s: Special) -> Token {
        let idx = SPECIALS.iter().position(|&x| x == s).unwrap();
        self.specials_base + idx as Token
    }

    /// Per-modality block separator. The ocr slot has its own separator even
    /// though its content tokens live in the text range.
    pub fn sep(&self, m: Modality) -> Token {
        match m {
            Modality::Text => self.special(Special::SepText),
            Modality::Audio => self.special(Special::SepAudio),
            Modality::Lip => self.special(Special::SepLip),
            Modality::Image => self.special(Special::SepImage),
            Modality::Raster => self.special(Special::SepRaster),
            Modality::Ocr => self.special(Special::SepOcr),
        }
    }

    pub fn text_token(&self, c: char) -> Option<Token> {
        glyphs::text_index(c).map(|i| self.text.start + i as Token)
    }

    pub fn text_char(&self, t: Token) -> Option<char> {
        if self.text.contains(&t) {
            glyphs::text_char((t - self.text.start) as usize)
        } else {
            None
        }
    }

    pub fn audio_token(&self, code: usize) -> Token {
        debug_assert!(code < AUDIO_CODEBOOK);
        self.audio.start + code as Token
    }

    pub fn audio_code(&self, t: Token) -> Option<usize> {
        self.audio.contains(&t).then(|| (t - self.audio.start) as usize)
    }

    pub fn lip_token(&self, class: usize) -> Token {
        debug_assert!(class < LIP_CLASSES);
        self.lip.start + class as Token
    }

    pub fn image_token(&self, class: usize) -> Token {
        debug_assert!(class < IMAGE_CLASSES);
        self.image.start + class as Token
    }

    pub fn image_class(&self, t: Token) -> Option<usize> {
        self.image.contains(&t).then(|| (t - self.image.start) as usize)
    }

    pub fn raster_token(&self, glyph: usize) -> Token {
        debug_assert!(glyph < RASTER_GLYPHS.len());
        self.raster.start + glyph as Token
    }

    pub fn raster_glyph(&self, t: Token) -> Option<char> {
        self.raster
            .contains(&t)
            .then(|| RASTER_GLYPHS[(t - self.raster.start) as usize])
    }

    /// Classify any id; `None` for ids outside the vocabulary.
    pub fn classify(&self, t: Token) -> Option<TokenClass> {
        if self.text.contains(&t) {
            Some(TokenClass::Content(Modality::Text))
        } else if self.audio.contains(&t) {
            Some(TokenClass::Content(Modality::Audio))
        } else if self.lip.contains(&t) {
            Some(TokenClass::Content(Modality::Lip))
        } else if self.image.contains(&t) {
            Some(TokenClass::Content(Modality::Image))
        } else if self.raster.contains(&t) {
            Some(TokenClass::Content(Modality::Raster))
        } else {
            let idx = (t.checked_sub(self.specials_base)?) as usize;
            SPECIALS.get(idx).map(|&s| Some(TokenClass::Special(s)))?
        }
    }
}
