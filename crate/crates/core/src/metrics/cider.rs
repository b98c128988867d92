//! CIDEr-D: TF-IDF n-gram cosine consensus (n = 1..4) with clipped counts
//! and a Gaussian length penalty (sigma = 6). Per-n scores are ×10 and
//! averaged; the corpus mean is reported ×10 again so a perfect match on a
//! well-conditioned corpus reads 100.0.

use std::collections::{HashMap, HashSet};

use super::tokenize::{metric_tokens, ngram_counts};
use super::EvalPair;
use crate::error::{Error, Result};

const MAX_N: usize = 4;
const SIGMA: f64 = 6.0;

type Counts = HashMap<String, usize>;

fn idf_tables(pairs: &[EvalPair]) -> Result<[HashMap<String, f64>; MAX_N]> {
    // a "document" is one pair's reference set; IDF needs at least two
    // distinct documents or every shared gram gets weight zero
    let distinct: HashSet<Vec<&String>> = pairs.iter().map(|p| p.references.iter().collect()).collect();
    if distinct.len() < 2 {
        return Err(Error::DegenerateCorpus(distinct.len()));
    }
    let n_docs = pairs.len() as f64;
    let mut tables: [HashMap<String, f64>; MAX_N] = Default::default();
    for (n, table) in tables.iter_mut().enumerate() {
        let mut df: HashMap<String, usize> = HashMap::new();
        for pair in pairs {
            let mut grams: HashSet<String> = HashSet::new();
            for r in &pair.references {
                grams.extend(ngram_counts(&metric_tokens(r), n + 1).into_keys());
            }
            for g in grams {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        *table = df
            .into_iter()
            .map(|(g, d)| (g, (n_docs / d as f64).ln()))
            .collect();
    }
    Ok(tables)
}

fn tfidf(counts: &Counts, idf: &HashMap<String, f64>) -> HashMap<String, f64> {
    counts
        .iter()
        .map(|(g, &c)| (g.clone(), c as f64 * idf.get(g).copied().unwrap_or(0.0)))
        .collect()
}

fn norm(v: &HashMap<String, f64>) -> f64 {
    v.values().map(|x| x * x).sum::<f64>().sqrt()
}

/// CIDEr-D similarity for one n: clipped TF-IDF dot over norms.
fn sim_n(
    cand_counts: &Counts,
    ref_counts: &Counts,
    idf: &HashMap<String, f64>,
    len_cand: usize,
    len_ref: usize,
) -> f64 {
    let g_c = tfidf(cand_counts, idf);
    let g_r = tfidf(ref_counts, idf);
    let nc = norm(&g_c);
    let nr = norm(&g_r);
    if nc == 0.0 || nr == 0.0 {
        return 0.0;
    }
    let mut dot = 0.0;
    for (g, &vc) in &g_c {
        if let Some(&vr) = g_r.get(g) {
            dot += vc.min(vr) * vr;
        }
    }
    let delta = len_cand as f64 - len_ref as f64;
    let penalty = (-delta * delta / (2.0 * SIGMA * SIGMA)).exp();
    penalty * dot / (nc * nr)
}

/// Corpus CIDEr-D, reported on a 0–100 scale.
pub fn cider_d(pairs: &[EvalPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let idf = idf_tables(pairs)?;
    let mut total = 0.0;
    for pair in pairs {
        let cand = metric_tokens(&pair.candidate);
        let refs: Vec<Vec<String>> = pair.references.iter().map(|r| metric_tokens(r)).collect();
        let mut pair_score = 0.0;
        for n in 0..MAX_N {
            let cand_counts = ngram_counts(&cand, n + 1);
            let mut ref_avg = 0.0;
            for r in &refs {
                let rc = ngram_counts(r, n + 1);
                ref_avg += sim_n(&cand_counts, &rc, &idf[n], cand.len(), r.len());
            }
            ref_avg /= refs.len() as f64;
            pair_score += 10.0 * ref_avg; // per-n convention
        }
        total += pair_score / MAX_N as f64;
    }
    // mean over pairs is in [0, 10]; report x10
    Ok(10.0 * total / pairs.len() as f64)
}
