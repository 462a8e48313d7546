//! English number-word lexicon covering 0 through 9999.

use super::CorpusError;

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen",
];

const TENS: [&str; 8] = [
    "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

/// Render a number as lowercase space-separated words, e.g. 132 becomes
/// "one hundred thirty two". Values above 9999 are outside the lexicon.
pub fn number_words(n: u32) -> Result<String, CorpusError> {
    if n > 9999 {
        return Err(CorpusError::LexiconRange(n));
    }
    Ok(render(n))
}

fn render(n: u32) -> String {
    match n {
        0..=19 => ONES[n as usize].to_string(),
        20..=99 => {
            let t = TENS[(n / 10 - 2) as usize];
            if n % 10 == 0 {
                t.to_string()
            } else {
                format!("{} {}", t, ONES[(n % 10) as usize])
            }
        }
        100..=999 => {
            let head = format!("{} hundred", ONES[(n / 100) as usize]);
            if n % 100 == 0 {
                head
            } else {
                format!("{} {}", head, render(n % 100))
            }
        }
        _ => {
            let head = format!("{} thousand", ONES[(n / 1000) as usize]);
            if n % 1000 == 0 {
                head
            } else {
                format!("{} {}", head, render(n % 1000))
            }
        }
    }
}
