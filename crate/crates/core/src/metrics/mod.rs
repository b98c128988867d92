//! Caption evaluation metrics and correspondence-threshold reporting.
//!
//! All metrics share one tokenization (lowercase, split on whitespace and
//! punctuation) so their scores are comparable. Scores are reported ×100;
//! CIDEr-D additionally follows the captioning convention of ×10 per n-gram
//! order and a final ×10, so a perfect match on a well-conditioned corpus
//! reads 100.0.

mod bleu;
mod cider;
mod embed;
mod meteor;
mod porter;
mod report;
mod rouge;
mod tokenize;

pub use bleu::{bleu4, bleu4_smoothed, unigram_precision};
pub use cider::cider_d;
pub use embed::{semantic_similarity, HashedBowEmbedder, SentenceEmbedder};
pub use meteor::meteor_lite;
pub use porter::porter_stem;
pub use report::{
    evaluate_corpus, threshold_subset, MetricReport, MetricValues, SubsetReport, DEFAULT_THRESHOLDS,
};
pub use rouge::rouge_l;
pub use tokenize::metric_tokens;

use crate::error::{Error, Result};

/// One candidate caption with its reference set and optional 1–5
/// correspondence score.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalPair {
    pub candidate: String,
    pub references: Vec<String>,
    pub correspondence_score: Option<f64>,
}

impl EvalPair {
    pub fn new(
        candidate: impl Into<String>,
        references: Vec<String>,
        correspondence_score: Option<f64>,
    ) -> Result<Self> {
        if references.is_empty() {
            return Err(Error::Config(vec!["EvalPair needs at least one reference".into()]));
        }
        if let Some(s) = correspondence_score {
            if !(1.0..=5.0).contains(&s) {
                return Err(Error::Config(vec![format!("correspondence score {s} not in [1, 5]")]));
            }
        }
        Ok(EvalPair {
            candidate: candidate.into(),
            references,
            correspondence_score,
        })
    }
}
