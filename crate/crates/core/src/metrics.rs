//! Text normalization, word-level alignment, and the WER-family metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("total reference word count is zero; WER is undefined")]
    EmptyReference,
    #[error("baseline WER is zero; the ratio is undefined")]
    ZeroBaseline,
    #[error("significance window needs at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("significance run failed: {0}")]
    RunFailed(String),
}

/// Normalize a transcription: lowercase, strip everything outside
/// `[a-z0-9 ]`, collapse whitespace runs, trim.
pub fn normalize_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    for c in s.chars() {
        let c = c.to_ascii_lowercase();
        if c.is_ascii_lowercase() || c.is_ascii_digit() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else if c.is_whitespace() {
            pending_space = true;
        }
        // Everything else is dropped without inserting a boundary.
    }
    out
}

/// Word-level edit operation counts from one alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditCounts {
    pub n_sub: usize,
    pub n_del: usize,
    pub n_ins: usize,
    pub n_cor: usize,
}

impl EditCounts {
    /// Reference word count: substitutions + deletions + correct words.
    pub fn n_ref(&self) -> usize {
        self.n_sub + self.n_del + self.n_cor
    }

    pub fn n_edits(&self) -> usize {
        self.n_sub + self.n_del + self.n_ins
    }

    pub fn add(&mut self, other: &EditCounts) {
        self.n_sub += other.n_sub;
        self.n_del += other.n_del;
        self.n_ins += other.n_ins;
        self.n_cor += other.n_cor;
    }
}

/// Corpus-pooled WER: counts are summed over all pairs before dividing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WerResult {
    pub counts: EditCounts,
    pub wer: f64,
}

/// Unit-cost Levenshtein alignment over words. Among cost-minimal alignments
/// the backtrace prefers substitution over a deletion+insertion pair, then
/// deletion before insertion, so the S/D/I breakdown is deterministic.
pub fn word_edit_ops(ref_words: &[&str], hyp_words: &[&str]) -> EditCounts {
    let n = ref_words.len();
    let m = hyp_words.len();
    let width = m + 1;
    let mut dp = vec![0usize; (n + 1) * width];
    for i in 0..=n {
        dp[i * width] = i;
    }
    for j in 0..=m {
        dp[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(ref_words[i - 1] != hyp_words[j - 1]);
            let diag = dp[(i - 1) * width + j - 1] + cost;
            let del = dp[(i - 1) * width + j] + 1;
            let ins = dp[i * width + j - 1] + 1;
            dp[i * width + j] = diag.min(del).min(ins);
        }
    }

    let mut counts = EditCounts::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * width + j];
        if i > 0 && j > 0 {
            let cost = usize::from(ref_words[i - 1] != hyp_words[j - 1]);
            if dp[(i - 1) * width + j - 1] + cost == here {
                if cost == 0 {
                    counts.n_cor += 1;
                } else {
                    counts.n_sub += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[(i - 1) * width + j] + 1 == here {
            counts.n_del += 1;
            i -= 1;
            continue;
        }
        counts.n_ins += 1;
        j -= 1;
    }
    counts
}

/// Pool edit counts over a corpus of (reference, hypothesis) pairs. Inputs
/// are normalized before alignment. WER may exceed 1 through insertions.
pub fn corpus_wer(pairs: &[(String, String)]) -> Result<WerResult, MetricsError> {
    let mut counts = EditCounts::default();
    for (reference, hypothesis) in pairs {
        let r = normalize_text(reference);
        let h = normalize_text(hypothesis);
        let r_words: Vec<&str> = r.split_whitespace().collect();
        let h_words: Vec<&str> = h.split_whitespace().collect();
        counts.add(&word_edit_ops(&r_words, &h_words));
    }
    if counts.n_ref() == 0 {
        return Err(MetricsError::EmptyReference);
    }
    Ok(WerResult {
        counts,
        wer: counts.n_edits() as f64 / counts.n_ref() as f64,
    })
}

/// Fractional WER reduction from adding modalities to the audio-only model.
/// Positive values mean the extra modalities helped.
pub fn relative_benefit(wer_audio_only: f64, wer_with_extra: f64) -> Result<f64, MetricsError> {
    if wer_audio_only <= 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok((wer_audio_only - wer_with_extra) / wer_audio_only)
}

/// Min/max/mean WER over retrainings that differ only in minibatch shuffle
/// order. Differences inside the recentred `[lo, hi]` band are not
/// distinguishable from shuffle noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceWindow {
    pub wer_runs: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
}

impl SignificanceWindow {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Is `other_wer` outside the window recentred on `base_wer`?
    pub fn is_significant(&self, base_wer: f64, other_wer: f64) -> bool {
        let delta = other_wer - base_wer;
        delta < self.lo - self.center || delta > self.hi - self.center
    }
}

/// Run `n_runs` trainings that differ only in the shuffle seed (the closure
/// receives the run index) and collect the WER spread.
pub fn significance_window<F>(n_runs: usize, mut run: F) -> Result<SignificanceWindow, MetricsError>
where
    F: FnMut(usize) -> Result<f64, String>,
{
    if n_runs < 2 {
        return Err(MetricsError::TooFewRuns(n_runs));
    }
    let mut wer_runs = Vec::with_capacity(n_runs);
    for i in 0..n_runs {
        wer_runs.push(run(i).map_err(MetricsError::RunFailed)?);
    }
    let lo = wer_runs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = wer_runs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let center = wer_runs.iter().sum::<f64>() / n_runs as f64;
    Ok(SignificanceWindow {
        wer_runs,
        lo,
        hi,
        center,
    })
}
