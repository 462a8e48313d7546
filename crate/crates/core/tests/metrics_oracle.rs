//! Exhaustive alignment oracle: every ref/hyp word pair up to length 5 over
//! a 3-word alphabet, checked against an independent top-down edit distance.

use std::collections::HashMap;

use mmasr_core::metrics::{normalize_text, word_edit_ops};
use proptest::prelude::*;

/// Independent top-down memoized edit distance (no backtrace, no tie rules).
fn edit_distance_oracle(r: &[&str], h: &[&str]) -> usize {
    fn go<'a>(
        r: &[&'a str],
        h: &[&'a str],
        i: usize,
        j: usize,
        memo: &mut HashMap<(usize, usize), usize>,
    ) -> usize {
        if i == r.len() {
            return h.len() - j;
        }
        if j == h.len() {
            return r.len() - i;
        }
        if let Some(&d) = memo.get(&(i, j)) {
            return d;
        }
        let sub = go(r, h, i + 1, j + 1, memo) + usize::from(r[i] != h[j]);
        let del = go(r, h, i + 1, j, memo) + 1;
        let ins = go(r, h, i, j + 1, memo) + 1;
        let d = sub.min(del).min(ins);
        memo.insert((i, j), d);
        d
    }
    go(r, h, 0, 0, &mut HashMap::new())
}

fn sequences_up_to(alphabet: &[&'static str], max_len: usize) -> Vec<Vec<&'static str>> {
    let mut all: Vec<Vec<&'static str>> = vec![vec![]];
    let mut frontier: Vec<Vec<&'static str>> = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for seq in &frontier {
            for &w in alphabet {
                let mut s = seq.clone();
                s.push(w);
                next.push(s);
            }
        }
        all.extend(next.iter().cloned());
        frontier = next;
    }
    all
}

#[test]
fn alignment_cost_matches_oracle_exhaustively() {
    let alphabet = ["a", "b", "c"];
    let seqs = sequences_up_to(&alphabet, 5);
    for r in &seqs {
        for h in &seqs {
            let counts = word_edit_ops(r, h);
            let oracle = edit_distance_oracle(r, h);
            assert_eq!(
                counts.n_edits(),
                oracle,
                "ref {r:?} hyp {h:?}: counts {counts:?}"
            );
            assert_eq!(counts.n_ref(), r.len(), "N identity broken for {r:?} {h:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn normalize_is_idempotent(s in "\\PC*") {
        let once = normalize_text(&s);
        prop_assert_eq!(normalize_text(&once), once.clone());
        prop_assert!(once.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == ' '));
        prop_assert!(!once.contains("  "));
        prop_assert!(!once.starts_with(' ') && !once.ends_with(' '));
    }

    #[test]
    fn wer_zero_iff_normalized_equal(a in "[a-c ]{0,12}", b in "[a-c ]{0,12}") {
        let na = normalize_text(&a);
        let nb = normalize_text(&b);
        let ra: Vec<&str> = na.split_whitespace().collect();
        if ra.is_empty() {
            return Ok(());
        }
        let hb: Vec<&str> = nb.split_whitespace().collect();
        let counts = word_edit_ops(&ra, &hb);
        let words_equal = ra == hb;
        prop_assert_eq!(counts.n_edits() == 0, words_equal);
    }
}
