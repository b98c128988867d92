//! METEOR-lite: unigram alignment with exact-then-stem matching, harmonic
//! F-mean (alpha = 0.9) and a fragmentation penalty (gamma = 0.5, beta = 3).
//!
//! Deliberately omits WordNet synonym matching; exact and Porter-stem
//! matches only.

use super::porter::porter_stem;
use super::tokenize::metric_tokens;
use super::EvalPair;
use crate::error::{Error, Result};

const ALPHA: f64 = 0.9;
const BETA: f64 = 3.0;
const GAMMA: f64 = 0.5;

/// Greedy left-to-right alignment: an exact pass, then a stem pass over the
/// leftovers. Returns (candidate index, reference index) pairs sorted by
/// candidate position.
fn align(cand: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut ref_used = vec![false; reference.len()];
    let mut cand_match: Vec<Option<usize>> = vec![None; cand.len()];

    for (ci, cw) in cand.iter().enumerate() {
        for (ri, rw) in reference.iter().enumerate() {
            if !ref_used[ri] && cw == rw {
                ref_used[ri] = true;
                cand_match[ci] = Some(ri);
                break;
            }
        }
    }
    let cand_stems: Vec<String> = cand.iter().map(|w| porter_stem(w)).collect();
    let ref_stems: Vec<String> = reference.iter().map(|w| porter_stem(w)).collect();
    for (ci, cs) in cand_stems.iter().enumerate() {
        if cand_match[ci].is_some() {
            continue;
        }
        for (ri, rs) in ref_stems.iter().enumerate() {
            if !ref_used[ri] && cs == rs {
                ref_used[ri] = true;
                cand_match[ci] = Some(ri);
                break;
            }
        }
    }
    cand_match
        .iter()
        .enumerate()
        .filter_map(|(ci, m)| m.map(|ri| (ci, ri)))
        .collect()
}

/// Chunks: maximal runs of matches contiguous in both sentences.
fn chunk_count(matches: &[(usize, usize)]) -> usize {
    let mut chunks = 0;
    let mut prev: Option<(usize, usize)> = None;
    for &(ci, ri) in matches {
        match prev {
            Some((pc, pr)) if ci == pc + 1 && ri == pr + 1 => {}
            _ => chunks += 1,
        }
        prev = Some((ci, ri));
    }
    chunks
}

/// Score for one candidate against one reference, in [0, 1].
pub fn meteor_pair(candidate: &str, reference: &str) -> f64 {
    let cand = metric_tokens(candidate);
    let rf = metric_tokens(reference);
    if cand.is_empty() || rf.is_empty() {
        return 0.0;
    }
    let matches = align(&cand, &rf);
    let m = matches.len() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let p = m / cand.len() as f64;
    let r = m / rf.len() as f64;
    let f_mean = p * r / (ALPHA * p + (1.0 - ALPHA) * r);
    let chunks = chunk_count(&matches) as f64;
    let penalty = GAMMA * (chunks / m).powf(BETA);
    f_mean * (1.0 - penalty)
}

/// Corpus METEOR-lite ×100: per-pair best reference, averaged.
pub fn meteor_lite(pairs: &[EvalPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let total: f64 = pairs
        .iter()
        .map(|pair| {
            pair.references
                .iter()
                .map(|r| meteor_pair(&pair.candidate, r))
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(100.0 * total / pairs.len() as f64)
}
