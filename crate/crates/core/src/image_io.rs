//! Canonical pixel domain: H×W×3 float arrays in [0, 1].

use std::path::Path;

use ndarray::Array3;

use crate::error::{Error, Result};

/// An RGB image with pixels normalized to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pixels: Array3<f64>,
}

impl Image {
    /// Wraps an H×W×3 array, validating the pixel domain.
    pub fn new(pixels: Array3<f64>) -> Result<Self> {
        let (_, _, c) = pixels.dim();
        if c != 3 {
            return Err(Error::shape("Image::new", "H x W x 3", format!("{:?}", pixels.dim())));
        }
        for &v in pixels.iter() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::PixelRange(v));
            }
        }
        Ok(Image { pixels })
    }

    /// Solid-color image, useful in tests.
    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Image::new(Array3::from_elem((height, width, 3), value))
    }

    /// Deterministic pseudo-random test image from a seed.
    pub fn synthetic(height: usize, width: usize, seed: u64) -> Self {
        let mut rng = crate::rng::SplitMix64::new(seed);
        let pixels = Array3::from_shape_simple_fn((height, width, 3), || rng.next_f64());
        Image { pixels }
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }
}

/// Loads a PNG or JPEG file and normalizes it to the [0, 1] float domain.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let img = image::open(path.as_ref())
        .map_err(|e| Error::ImageDecode(format!("{}: {e}", path.as_ref().display())))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let mut pixels = Array3::zeros((h as usize, w as usize, 3));
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            pixels[[y as usize, x as usize, c]] = p.0[c] as f64 / 255.0;
        }
    }
    Ok(Image { pixels })
}
