//! ROUGE-L: longest-common-subsequence F-measure, averaged over the corpus.

use super::tokenize::metric_tokens;
use super::EvalPair;
use crate::error::{Error, Result};

/// Recall-weighted beta, the usual captioning-evaluation setting.
const BETA: f64 = 1.2;

/// LCS length between two token lists.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            cur[j + 1] = if ai == bj {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn pair_f(pair: &EvalPair) -> f64 {
    let cand = metric_tokens(&pair.candidate);
    let mut best = 0.0f64;
    for r in &pair.references {
        let rf = metric_tokens(r);
        let lcs = lcs_len(&cand, &rf) as f64;
        if lcs == 0.0 {
            continue;
        }
        let p = lcs / cand.len() as f64;
        let rec = lcs / rf.len() as f64;
        let f = (1.0 + BETA * BETA) * p * rec / (rec + BETA * BETA * p);
        best = best.max(f);
    }
    best
}

/// Corpus ROUGE-L ×100: per-pair best reference F, averaged.
pub fn rouge_l(pairs: &[EvalPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(100.0 * pairs.iter().map(pair_f).sum::<f64>() / pairs.len() as f64)
}
