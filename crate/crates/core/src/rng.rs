//! Deterministic weight-initialization stream.
//!
//! Frozen model weights (toy encoder, tiny LM) are a pure function of their
//! seed. SplitMix64 keeps the stream trivial to reproduce outside this crate,
//! which is what the golden-file generators do.

/// SplitMix64 PRNG. Not for cryptography; for reproducible weight init.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [-scale, scale).
    pub fn uniform(&mut self, scale: f64) -> f64 {
        (2.0 * self.next_f64() - 1.0) * scale
    }

    pub fn fill_uniform(&mut self, out: &mut [f64], scale: f64) {
        for v in out.iter_mut() {
            *v = self.uniform(scale);
        }
    }
}

/// FNV-1a over the little-endian bit patterns of a float slice.
///
/// Used for frozen-parameter audits: bitwise-identical tensors hash equal.
pub fn checksum_f64(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
    }
    h
}
