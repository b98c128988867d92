//! Dataset manifests: JSON-lines ingestion and validation, split
//! management, correspondence-score statistics, and caption augmentation.

mod augment;
mod prompt;

pub use augment::{
    augment_with_llm, AuditEntry, AuditOutcome, CompletionClient, LlmClientConfig, MockClient,
};
#[cfg(feature = "http-client")]
pub use augment::HttpCompletionClient;
pub use prompt::{build_fewshot_prompt, FEWSHOT_TEMPLATE};

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One dataset row. Images are referenced by path or URI, never inlined.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ImagePairRecord {
    pub id: String,
    pub src_image: String,
    pub edit_image: String,
    pub caption_src: String,
    pub caption_edit: String,
    pub edit_instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub change_summary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correspondence_score: Option<f64>,
    /// Upstream generation provenance (e.g. the image-synthesis pipeline).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

/// Loads and validates a JSON-lines manifest. All problems are collected
/// and reported together, each tagged with its line number.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ImagePairRecord>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_manifest(&text)
}

pub fn parse_manifest(text: &str) -> Result<Vec<ImagePairRecord>> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let n = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ImagePairRecord>(line) {
            Ok(rec) => {
                if let Some(score) = rec.correspondence_score {
                    if !(1.0..=5.0).contains(&score) {
                        errors.push(format!("line {n}: correspondence_score {score} not in [1, 5]"));
                        continue;
                    }
                }
                if rec.id.is_empty() {
                    errors.push(format!("line {n}: empty id"));
                    continue;
                }
                if !seen_ids.insert(rec.id.clone()) {
                    errors.push(format!("line {n}: duplicate id '{}'", rec.id));
                    continue;
                }
                records.push(rec);
            }
            Err(e) => errors.push(format!("line {n}: {e}")),
        }
    }
    if errors.is_empty() {
        Ok(records)
    } else {
        Err(Error::ManifestValidation(errors))
    }
}

/// Writes records as JSON lines, one record per line, field order fixed.
pub fn save_manifest(records: &[ImagePairRecord], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, manifest_to_string(records)?)?;
    Ok(())
}

pub fn manifest_to_string(records: &[ImagePairRecord]) -> Result<String> {
    let mut out = String::new();
    for rec in records {
        let _ = writeln!(out, "{}", serde_json::to_string(rec)?);
    }
    Ok(out)
}

/// Checks that local image paths exist, relative to `base`. Entries with a
/// URI scheme are skipped.
pub fn validate_image_refs(records: &[ImagePairRecord], base: &Path) -> Result<()> {
    let mut errors = Vec::new();
    for rec in records {
        for (field, value) in [("src_image", &rec.src_image), ("edit_image", &rec.edit_image)] {
            if value.contains("://") {
                continue;
            }
            if !base.join(value).exists() {
                errors.push(format!("record '{}': {field} '{}' not found", rec.id, value));
            }
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::ManifestValidation(errors))
    }
}

/// Named partitions, either by fraction (seeded shuffle) or explicit ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SplitSpec {
    Fractions {
        parts: Vec<(String, f64)>,
        seed: u64,
    },
    ExplicitIds {
        parts: Vec<(String, Vec<String>)>,
    },
}

/// Deterministic, disjoint, exhaustive partition of record ids.
pub fn split(records: &[ImagePairRecord], spec: &SplitSpec) -> Result<BTreeMap<String, Vec<String>>> {
    match spec {
        SplitSpec::Fractions { parts, seed } => {
            let total: f64 = parts.iter().map(|(_, f)| f).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Config(vec![format!("split fractions sum to {total}, expected 1")]));
            }
            let mut ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for i in (1..ids.len()).rev() {
                let j = rng.gen_range(0..=i);
                ids.swap(i, j);
            }
            let n = ids.len() as f64;
            let mut out = BTreeMap::new();
            let mut cum = 0.0;
            let mut start = 0usize;
            for (idx, (name, frac)) in parts.iter().enumerate() {
                cum += frac;
                let end = if idx + 1 == parts.len() {
                    ids.len()
                } else {
                    (cum * n).round() as usize
                };
                out.insert(name.clone(), ids[start..end].to_vec());
                start = end;
            }
            Ok(out)
        }
        SplitSpec::ExplicitIds { parts } => {
            let all: HashSet<&String> = records.iter().map(|r| &r.id).collect();
            let mut seen: HashSet<&String> = HashSet::new();
            let mut errors = Vec::new();
            let mut out = BTreeMap::new();
            for (name, ids) in parts {
                for id in ids {
                    if !all.contains(id) {
                        errors.push(format!("partition '{name}': unknown id '{id}'"));
                    }
                    if !seen.insert(id) {
                        errors.push(format!("partition '{name}': id '{id}' assigned twice"));
                    }
                }
                out.insert(name.clone(), ids.clone());
            }
            if seen.len() != all.len() {
                errors.push(format!(
                    "partitions cover {} of {} records; split must be exhaustive",
                    seen.len(),
                    all.len()
                ));
            }
            if errors.is_empty() {
                Ok(out)
            } else {
                Err(Error::ManifestValidation(errors))
            }
        }
    }
}

/// Histogram of correspondence scores, binned by rounding to 1..5.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScoreStats {
    /// counts[b] is the number of records whose rounded score is b+1
    pub counts: [usize; 5],
    pub percentages: [f64; 5],
    pub scored: usize,
    pub unscored: usize,
    pub empty: bool,
}

pub fn score_stats(records: &[ImagePairRecord]) -> ScoreStats {
    let mut counts = [0usize; 5];
    let mut scored = 0usize;
    let mut unscored = 0usize;
    for rec in records {
        match rec.correspondence_score {
            Some(s) => {
                let bin = (s.round() as usize).clamp(1, 5) - 1;
                counts[bin] += 1;
                scored += 1;
            }
            None => unscored += 1,
        }
    }
    let mut percentages = [0.0; 5];
    if scored > 0 {
        for (p, &c) in percentages.iter_mut().zip(counts.iter()) {
            *p = 100.0 * c as f64 / scored as f64;
        }
    }
    ScoreStats {
        counts,
        percentages,
        scored,
        unscored,
        empty: scored == 0,
    }
}

/// Records whose correspondence score is present and ≥ `min_score`.
pub fn filter_min_score(records: &[ImagePairRecord], min_score: f64) -> Vec<ImagePairRecord> {
    records
        .iter()
        .filter(|r| r.correspondence_score.is_some_and(|s| s >= min_score))
        .cloned()
        .collect()
}
