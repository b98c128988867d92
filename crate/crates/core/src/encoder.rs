//! Frozen image encoders producing k×h feature maps.
//!
//! The toy patch encoder exists so the whole pipeline runs deterministically
//! at desk scale: non-overlapping patch flatten followed by a seeded random
//! linear map. Pretrained backbones plug in through [`ImageEncoder`] and the
//! adapter registry; they declare (k, h) up front so downstream projection
//! sizing stays static.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::Image;
use crate::rng::{checksum_f64, SplitMix64};

/// k×h feature matrix for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    data: Array2<f64>,
}

impl FeatureMap {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::shape("FeatureMap::new", "finite entries", "non-finite entry"));
        }
        Ok(FeatureMap { data })
    }

    pub fn k(&self) -> usize {
        self.data.nrows()
    }

    pub fn h(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }
}

/// Encoder selection and shape contract.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EncoderConfig {
    /// Deterministic patch-flatten encoder; weights are a pure function of `seed`.
    ToyPatch {
        patch_size: usize,
        h: usize,
        seed: u64,
        #[serde(default)]
        use_bias: bool,
    },
    /// Pretrained backbone resolved by name; (k, h) declared at registration.
    ExternalAdapter { name: String, k: usize, h: usize },
}

impl EncoderConfig {
    /// The (k, h) contract downstream modules size against.
    ///
    /// For the toy encoder k depends on the image geometry: k = (H/p)·(W/p).
    pub fn describe(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        match self {
            EncoderConfig::ToyPatch { patch_size, h, .. } => {
                let p = *patch_size;
                if p == 0 || height % p != 0 || width % p != 0 {
                    return Err(Error::PatchDivisibility {
                        height,
                        width,
                        patch: p,
                    });
                }
                Ok(((height / p) * (width / p), *h))
            }
            EncoderConfig::ExternalAdapter { k, h, .. } => Ok((*k, *h)),
        }
    }
}

/// A frozen image encoder. Stateless after construction; safe to share
/// across workers.
pub trait ImageEncoder: Send + Sync {
    fn name(&self) -> &str;

    /// Declared output shape for an image of the given size.
    fn shape(&self, height: usize, width: usize) -> Result<(usize, usize)>;

    fn encode(&self, image: &Image) -> Result<FeatureMap>;

    /// Flattened frozen parameters, used by the frozen-weight audit.
    /// Parameter-free adapters return an empty vec.
    fn parameters(&self) -> Vec<f64> {
        Vec::new()
    }

    fn checksum(&self) -> u64 {
        checksum_f64(&self.parameters())
    }
}

/// Patch-flatten encoder with a seeded random linear map.
///
/// Each non-overlapping `patch×patch` RGB patch is flattened in (y, x, channel)
/// order to a vector of length 3p², then mapped to `h` features by a fixed
/// weight matrix drawn uniform(±1/√(3p²)) from a SplitMix64 stream on `seed`
/// (weight row-major first, then bias when enabled).
pub struct ToyPatchEncoder {
    patch_size: usize,
    h: usize,
    weight: Array2<f64>, // h × 3p²
    bias: Array1<f64>,
}

impl ToyPatchEncoder {
    pub fn new(patch_size: usize, h: usize, seed: u64, use_bias: bool) -> Self {
        let d = 3 * patch_size * patch_size;
        let scale = 1.0 / (d as f64).sqrt();
        let mut rng = SplitMix64::new(seed);
        let mut w = vec![0.0; h * d];
        rng.fill_uniform(&mut w, scale);
        let mut b = vec![0.0; h];
        if use_bias {
            rng.fill_uniform(&mut b, scale);
        }
        ToyPatchEncoder {
            patch_size,
            h,
            weight: Array2::from_shape_vec((h, d), w).expect("weight shape"),
            bias: Array1::from_vec(b),
        }
    }

    pub fn from_config(cfg: &EncoderConfig) -> Result<Self> {
        match cfg {
            EncoderConfig::ToyPatch {
                patch_size,
                h,
                seed,
                use_bias,
            } => Ok(ToyPatchEncoder::new(*patch_size, *h, *seed, *use_bias)),
            EncoderConfig::ExternalAdapter { name, .. } => Err(Error::Encoder {
                encoder: name.clone(),
                message: "external adapter cannot back a toy patch encoder".into(),
            }),
        }
    }
}

impl ImageEncoder for ToyPatchEncoder {
    fn name(&self) -> &str {
        "toy-patch"
    }

    fn shape(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let p = self.patch_size;
        if height % p != 0 || width % p != 0 {
            return Err(Error::PatchDivisibility {
                height,
                width,
                patch: p,
            });
        }
        Ok(((height / p) * (width / p), self.h))
    }

    fn encode(&self, image: &Image) -> Result<FeatureMap> {
        let (k, _) = self.shape(image.height(), image.width())?;
        let p = self.patch_size;
        let d = 3 * p * p;
        let grid_w = image.width() / p;
        let px = image.pixels();

        let mut out = Array2::zeros((k, self.h));
        let mut patch = vec![0.0; d];
        for row in 0..k {
            let gy = row / grid_w;
            let gx = row % grid_w;
            let mut i = 0;
            for y in 0..p {
                for x in 0..p {
                    for c in 0..3 {
                        patch[i] = px[[gy * p + y, gx * p + x, c]];
                        i += 1;
                    }
                }
            }
            for j in 0..self.h {
                let wrow = self.weight.row(j);
                let mut acc = self.bias[j];
                for (a, b) in wrow.iter().zip(patch.iter()) {
                    acc += a * b;
                }
                out[[row, j]] = acc;
            }
        }
        FeatureMap::new(out)
    }

    fn parameters(&self) -> Vec<f64> {
        self.weight.iter().chain(self.bias.iter()).copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_cfg(patch: usize, h: usize, seed: u64) -> EncoderConfig {
        EncoderConfig::ToyPatch {
            patch_size: patch,
            h,
            seed,
            use_bias: false,
        }
    }

    #[test]
    fn zero_image_zero_bias_gives_zero_features() {
        let enc = ToyPatchEncoder::new(16, 8, 1, false);
        let img = Image::filled(48, 48, 0.0).unwrap();
        let fm = enc.encode(&img).unwrap();
        assert_eq!((fm.k(), fm.h()), (9, 8));
        assert!(fm.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn describe_matches_published_profiles() {
        // 12x12 grid at h=3072 flattens to k=144
        let cfg = toy_cfg(16, 3072, 0);
        assert_eq!(cfg.describe(192, 192).unwrap(), (144, 3072));

        let clip = EncoderConfig::ExternalAdapter {
            name: "clip-rn50x16".into(),
            k: 144,
            h: 3072,
        };
        assert_eq!(clip.describe(480, 640).unwrap(), (144, 3072));

        let qformer = EncoderConfig::ExternalAdapter {
            name: "qformer".into(),
            k: 257,
            h: 768,
        };
        assert_eq!(qformer.describe(1, 1).unwrap().0, 257);
    }

    #[test]
    fn describe_toy_arithmetic() {
        assert_eq!(toy_cfg(16, 8, 0).describe(48, 48).unwrap(), (9, 8));
    }

    #[test]
    fn divisibility_error() {
        let enc = ToyPatchEncoder::new(16, 8, 1, false);
        let img = Image::filled(50, 48, 0.5).unwrap();
        match enc.encode(&img) {
            Err(Error::PatchDivisibility { patch: 16, .. }) => {}
            other => panic!("expected divisibility error, got {other:?}"),
        }
    }

    #[test]
    fn encode_is_bitwise_deterministic() {
        let enc = ToyPatchEncoder::new(8, 4, 7, true);
        let img = Image::synthetic(32, 32, 99);
        let a = enc.encode(&img).unwrap();
        let b = enc.encode(&img).unwrap();
        assert_eq!(a, b);
        let enc2 = ToyPatchEncoder::new(8, 4, 7, true);
        assert_eq!(enc2.encode(&img).unwrap(), a);
    }

    #[test]
    fn toy_encoder_is_linear_with_zero_bias() {
        let enc = ToyPatchEncoder::new(8, 4, 7, false);
        let img = Image::synthetic(16, 16, 5);
        let scaled = Image::new(img.pixels() * 0.5).unwrap();
        let f = enc.encode(&img).unwrap();
        let fs = enc.encode(&scaled).unwrap();
        for (a, b) in f.data().iter().zip(fs.data().iter()) {
            assert!((a * 0.5 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn output_shape_matches_describe() {
        let cfg = toy_cfg(8, 4, 7);
        let enc = ToyPatchEncoder::from_config(&cfg).unwrap();
        let img = Image::synthetic(24, 32, 2);
        let fm = enc.encode(&img).unwrap();
        assert_eq!((fm.k(), fm.h()), cfg.describe(24, 32).unwrap());
    }
}
