//! Corpus-level reporting with correspondence-threshold subsets.

use serde::{Deserialize, Serialize};

use super::{bleu4, cider_d, meteor_lite, rouge_l, semantic_similarity, EvalPair, SentenceEmbedder};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLDS: [f64; 3] = [3.0, 4.0, 5.0];

/// All five metrics, ×100. CIDEr-D is absent when the (sub)corpus is too
/// degenerate for IDF (fewer than two distinct reference documents).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricValues {
    pub semantic_similarity: f64,
    pub bleu4: f64,
    pub cider_d: Option<f64>,
    pub meteor: f64,
    pub rouge_l: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SubsetReport {
    pub threshold: f64,
    pub count: usize,
    pub values: Option<MetricValues>,
}

/// Header notes document the scaling conventions so downstream readers do
/// not have to guess.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricReport {
    pub notes: String,
    pub count: usize,
    pub overall: MetricValues,
    pub subsets: Vec<SubsetReport>,
}

const REPORT_NOTES: &str = "all metrics x100; CIDEr-D: sigma=6, per-n x10, final x10; \
METEOR-lite: exact+Porter stems, alpha=0.9, beta=3, gamma=0.5; BLEU-4 corpus-level, unsmoothed; \
ROUGE-L beta=1.2; semantic similarity: cosine of sentence embeddings; \
subset@t keeps pairs with average correspondence score >= t";

fn values_for(pairs: &[EvalPair], embedder: &dyn SentenceEmbedder) -> Result<MetricValues> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let semantic = 100.0
        * pairs
            .iter()
            .map(|p| {
                p.references
                    .iter()
                    .map(|r| semantic_similarity(&p.candidate, r, embedder))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum::<f64>()
        / pairs.len() as f64;
    let cider = match cider_d(pairs) {
        Ok(v) => Some(v),
        Err(Error::DegenerateCorpus(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricValues {
        semantic_similarity: semantic,
        bleu4: bleu4(pairs)?,
        cider_d: cider,
        meteor: meteor_lite(pairs)?,
        rouge_l: rouge_l(pairs)?,
    })
}

/// Filters pairs by correspondence score ≥ t. Errors when any pair lacks a
/// score.
pub fn threshold_subset(pairs: &[EvalPair], t: f64) -> Result<Vec<EvalPair>> {
    if pairs.iter().any(|p| p.correspondence_score.is_none()) {
        return Err(Error::UnscoredPairs);
    }
    Ok(pairs
        .iter()
        .filter(|p| p.correspondence_score.expect("checked") >= t)
        .cloned()
        .collect())
}

/// Full report: overall corpus values plus one sub-report per threshold.
pub fn evaluate_corpus(
    pairs: &[EvalPair],
    thresholds: &[f64],
    embedder: &dyn SentenceEmbedder,
) -> Result<MetricReport> {
    let overall = values_for(pairs, embedder)?;
    let mut subsets = Vec::new();
    for &t in thresholds {
        let subset = threshold_subset(pairs, t)?;
        let values = if subset.is_empty() {
            None
        } else {
            Some(values_for(&subset, embedder)?)
        };
        subsets.push(SubsetReport {
            threshold: t,
            count: subset.len(),
            values,
        });
    }
    Ok(MetricReport {
        notes: REPORT_NOTES.into(),
        count: pairs.len(),
        overall,
        subsets,
    })
}

impl MetricReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subset,count,semantic,bleu4,cider_d,meteor,rouge_l\n");
        let row = |label: &str, count: usize, v: &MetricValues| {
            format!(
                "{label},{count},{:.4},{:.4},{},{:.4},{:.4}\n",
                v.semantic_similarity,
                v.bleu4,
                v.cider_d.map_or("NA".to_string(), |c| format!("{c:.4}")),
                v.meteor,
                v.rouge_l
            )
        };
        out.push_str(&row("all", self.count, &self.overall));
        for s in &self.subsets {
            let label = format!("@{}", s.threshold);
            match &s.values {
                Some(v) => out.push_str(&row(&label, s.count, v)),
                None => out.push_str(&format!("{label},{},NA,NA,NA,NA,NA\n", s.count)),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::HashedBowEmbedder;

    fn pair(c: &str, r: &str, score: Option<f64>) -> EvalPair {
        EvalPair::new(c, vec![r.to_string()], score).unwrap()
    }

    fn scored_corpus() -> Vec<EvalPair> {
        vec![
            pair("the red box was added", "the red box was added", Some(2.0)),
            pair("a circle was removed", "a green circle was removed", Some(3.0)),
            pair("the sky turned dark", "the sky turned dark blue", Some(4.33)),
            pair("a dog replaced the cat", "a dog replaced the cat", Some(5.0)),
        ]
    }

    #[test]
    fn subset_sizes_match_filter_arithmetic() {
        let pairs = scored_corpus();
        let report = evaluate_corpus(&pairs, &DEFAULT_THRESHOLDS, &HashedBowEmbedder::default()).unwrap();
        let counts: Vec<usize> = report.subsets.iter().map(|s| s.count).collect();
        assert_eq!(counts, vec![3, 2, 1]);
    }

    #[test]
    fn subsets_are_monotone() {
        let pairs = scored_corpus();
        let report = evaluate_corpus(&pairs, &DEFAULT_THRESHOLDS, &HashedBowEmbedder::default()).unwrap();
        for w in report.subsets.windows(2) {
            assert!(w[0].count >= w[1].count);
        }
    }

    #[test]
    fn perfect_matches_propagate_to_every_subset() {
        let pairs: Vec<EvalPair> = [
            ("the red box was added here", 3.0),
            ("a green circle was removed today", 4.0),
            ("the cat became a dog instead", 5.0),
        ]
        .iter()
        .map(|(t, s)| pair(t, t, Some(*s)))
        .collect();
        let report = evaluate_corpus(&pairs, &DEFAULT_THRESHOLDS, &HashedBowEmbedder::default()).unwrap();
        assert!((report.overall.bleu4 - 100.0).abs() < 1e-9);
        assert!((report.overall.rouge_l - 100.0).abs() < 1e-9);
        for s in &report.subsets {
            let v = s.values.as_ref().unwrap();
            assert!((v.bleu4 - 100.0).abs() < 1e-9, "subset @{}", s.threshold);
            assert!((v.rouge_l - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn unscored_pairs_reject_threshold_mode() {
        let pairs = vec![pair("a b", "a b", None)];
        assert!(matches!(
            evaluate_corpus(&pairs, &DEFAULT_THRESHOLDS, &HashedBowEmbedder::default()),
            Err(Error::UnscoredPairs)
        ));
        // no thresholds requested: unscored pairs are fine
        assert!(evaluate_corpus(&pairs, &[], &HashedBowEmbedder::default()).is_ok());
    }

    #[test]
    fn evaluation_is_deterministic() {
        let pairs = scored_corpus();
        let e = HashedBowEmbedder::default();
        let a = evaluate_corpus(&pairs, &DEFAULT_THRESHOLDS, &e).unwrap();
        let b = evaluate_corpus(&pairs, &DEFAULT_THRESHOLDS, &e).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_has_one_row_per_subset() {
        let pairs = scored_corpus();
        let report = evaluate_corpus(&pairs, &DEFAULT_THRESHOLDS, &HashedBowEmbedder::default()).unwrap();
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 1 + 1 + 3);
        assert!(csv.starts_with("subset,count,"));
    }
}
