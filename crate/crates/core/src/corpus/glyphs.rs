//! Fixed character tables shared by the modality encoders.
//!
//! These tables are part of the corpus definition: changing any of them
//! changes every generated dataset, so they are versioned here rather than
//! configured.

/// Characters the text range covers: `a`-`z` plus space.
pub const TEXT_CHARS: usize = 27;

/// Audio codebook size; character codes are injective into it.
pub const AUDIO_CODEBOOK: usize = 64;

/// Number of viseme classes in the lip map.
pub const LIP_CLASSES: usize = 12;

/// Cells per equation in the image rendering (leading separator included).
pub const IMG_EQ_CELLS: usize = 24;

/// Grid glyphs a raster cell can hold: digits plus operator symbols.
pub const RASTER_GLYPHS: [char; 14] = [
    '0', '1', '2', '3', '4', '5', '6', '7', '8', '9', '+', '-', '*', '=',
];

/// Index of a text character: `a`-`z` map to 0-25, space to 26.
pub fn text_index(c: char) -> Option<usize> {
    match c {
        'a'..='z' => Some(c as usize - 'a' as usize),
        ' ' => Some(26),
        _ => None,
    }
}

pub fn text_char(index: usize) -> Option<char> {
    match index {
        0..=25 => Some((b'a' + index as u8) as char),
        26 => Some(' '),
        _ => None,
    }
}

/// Injective audio code for a text character. 7 is coprime to the codebook
/// size, so distinct characters never collide.
pub fn audio_code(c: char) -> Option<usize> {
    text_index(c).map(|i| (i * 7 + 3) % AUDIO_CODEBOOK)
}

/// Inverse of [`audio_code`]; `None` for codes no character maps to.
pub fn audio_code_char(code: usize) -> Option<char> {
    (0..TEXT_CHARS).find_map(|i| {
        if (i * 7 + 3) % AUDIO_CODEBOOK == code {
            text_char(i)
        } else {
            None
        }
    })
}

/// Viseme grouping: mouth-shape classes over the text alphabet. Many-to-one,
/// so the lip stream cannot be decoded back to characters unambiguously.
pub const VISEME_CLASSES: [&[char]; LIP_CLASSES] = [
    &[' '],
    &['a'],
    &['e', 'i', 'y'],
    &['o', 'u', 'w'],
    &['b', 'm', 'p'],
    &['f', 'v'],
    &['c', 'k', 'g', 'q', 'x'],
    &['d', 't'],
    &['s', 'z'],
    &['l', 'n'],
    &['r'],
    &['h', 'j'],
];

pub fn viseme_class(c: char) -> Option<usize> {
    VISEME_CLASSES
        .iter()
        .position(|class| class.contains(&c))
}

/// Visual confusion classes over letters, digits, and equation symbols.
/// Characters in the same class render to the same image token, and OCR
/// errors substitute a character only within its class. Every letter shares
/// a class with at least one other letter so an OCR substitution always
/// lands back in the text alphabet.
pub const CONFUSION_CLASSES: [&[char]; 20] = [
    &['a', 'o', '0'],
    &['b', 'h', '6', '8'],
    &['c', 'e'],
    &['d', 'q', '9'],
    &['f', 't'],
    &['g', 'y'],
    &['i', 'l', '1', '7'],
    &['j', 'p'],
    &['k', 'x'],
    &['m', 'n'],
    &['r', 's', '5'],
    &['u', 'v'],
    &['w', 'z', '2'],
    &['3'],
    &['4'],
    &['+'],
    &['-'],
    &['*'],
    &['='],
    &[' '],
];

/// Number of confusion classes; sizes the image token range.
pub const IMAGE_CLASSES: usize = CONFUSION_CLASSES.len();

pub fn confusion_class(c: char) -> Option<usize> {
    CONFUSION_CLASSES
        .iter()
        .position(|class| class.contains(&c))
}

/// Letters sharing a confusion class with `c`, excluding `c` itself.
pub fn letter_peers(c: char) -> Vec<char> {
    match confusion_class(c) {
        Some(idx) => CONFUSION_CLASSES[idx]
            .iter()
            .copied()
            .filter(|&p| p != c && p.is_ascii_lowercase())
            .collect(),
        None => Vec::new(),
    }
}

pub fn raster_glyph_index(c: char) -> Option<usize> {
    RASTER_GLYPHS.iter().position(|&g| g == c)
}
