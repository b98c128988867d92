//! Corpus-level BLEU-4: modified n-gram precisions (n = 1..4), geometric
//! mean, brevity penalty. No smoothing by default; a smoothed per-corpus
//! mode exists for short toy corpora.

use std::collections::HashMap;

use super::tokenize::{metric_tokens, ngram_counts};
use super::EvalPair;
use crate::error::{Error, Result};

const MAX_N: usize = 4;

struct Counts {
    matched: [f64; MAX_N],
    total: [f64; MAX_N],
    cand_len: usize,
    ref_len: usize,
}

fn accumulate(pairs: &[EvalPair]) -> Result<Counts> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut c = Counts {
        matched: [0.0; MAX_N],
        total: [0.0; MAX_N],
        cand_len: 0,
        ref_len: 0,
    };
    for pair in pairs {
        let cand = metric_tokens(&pair.candidate);
        let refs: Vec<Vec<String>> = pair.references.iter().map(|r| metric_tokens(r)).collect();
        c.cand_len += cand.len();
        // effective reference length: closest to the candidate, ties to shorter
        let eff = refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(cand.len()), l))
            .unwrap_or(0);
        c.ref_len += eff;
        for n in 1..=MAX_N {
            let cand_grams = ngram_counts(&cand, n);
            let mut max_ref: HashMap<String, usize> = HashMap::new();
            for r in &refs {
                for (g, cnt) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(cnt);
                }
            }
            for (g, cnt) in &cand_grams {
                c.total[n - 1] += *cnt as f64;
                let clip = max_ref.get(g).copied().unwrap_or(0);
                c.matched[n - 1] += (*cnt).min(clip) as f64;
            }
        }
    }
    Ok(c)
}

fn score(c: &Counts, smooth: bool) -> f64 {
    let mut log_sum = 0.0;
    for n in 0..MAX_N {
        let (num, den) = if smooth && n > 0 {
            // add-one smoothing on higher orders only
            (c.matched[n] + 1.0, c.total[n] + 1.0)
        } else {
            (c.matched[n], c.total[n])
        };
        if num <= 0.0 || den <= 0.0 {
            return 0.0;
        }
        log_sum += (num / den).ln();
    }
    let precision = (log_sum / MAX_N as f64).exp();
    let bp = if c.cand_len >= c.ref_len || c.cand_len == 0 {
        1.0
    } else {
        (1.0 - c.ref_len as f64 / c.cand_len as f64).exp()
    };
    100.0 * bp * precision
}

/// Corpus BLEU-4 ×100, unsmoothed.
pub fn bleu4(pairs: &[EvalPair]) -> Result<f64> {
    Ok(score(&accumulate(pairs)?, false))
}

/// Corpus BLEU-4 ×100 with add-one smoothing on n ≥ 2, for tiny corpora.
pub fn bleu4_smoothed(pairs: &[EvalPair]) -> Result<f64> {
    Ok(score(&accumulate(pairs)?, true))
}

/// Clipped modified unigram precision for a single pair, exposed for the
/// oracle suite.
pub fn unigram_precision(candidate: &str, reference: &str) -> f64 {
    let cand = metric_tokens(candidate);
    let rf = metric_tokens(reference);
    let cand_counts = ngram_counts(&cand, 1);
    let ref_counts = ngram_counts(&rf, 1);
    let mut matched = 0usize;
    let mut total = 0usize;
    for (g, cnt) in &cand_counts {
        total += cnt;
        matched += (*cnt).min(ref_counts.get(g).copied().unwrap_or(0));
    }
    if total == 0 {
        0.0
    } else {
        matched as f64 / total as f64
    }
}
