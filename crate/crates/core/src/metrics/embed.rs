//! Sentence embedders and the cosine-similarity metric.

use ndarray::Array1;

/// Maps a sentence to a unit-norm d-dimensional vector.
pub trait SentenceEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Array1<f64>;
}

/// Test embedder: hashed bag of words over the shared metric tokenizer.
///
/// Token counts accumulate into FNV-hashed buckets and the vector is L2
/// normalized; counts are nonnegative so any non-empty text has positive
/// norm. Empty texts map to the first basis vector.
pub struct HashedBowEmbedder {
    dim: usize,
}

impl HashedBowEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0);
        HashedBowEmbedder { dim }
    }
}

impl Default for HashedBowEmbedder {
    fn default() -> Self {
        HashedBowEmbedder::new(64)
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

impl SentenceEmbedder for HashedBowEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Array1<f64> {
        let mut v = Array1::zeros(self.dim);
        let tokens = super::tokenize::metric_tokens(text);
        if tokens.is_empty() {
            v[0] = 1.0;
            return v;
        }
        for t in tokens {
            v[(fnv1a(&t) % self.dim as u64) as usize] += 1.0;
        }
        let norm = v.dot(&v).sqrt();
        v / norm
    }
}

/// Cosine similarity between the embeddings of the two texts.
///
/// Embedders keep outputs unit-norm, so this is a plain dot product and is
/// exactly symmetric.
pub fn semantic_similarity(c: &str, c_prime: &str, embedder: &dyn SentenceEmbedder) -> f64 {
    embedder.embed(c).dot(&embedder.embed(c_prime))
}
