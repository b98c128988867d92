//! Registry for optional heavyweight model adapters.
//!
//! The core pipeline runs entirely on toy components; adapters let a real
//! encoder, sentence embedder, or LM be slotted in at runtime. Each adapter
//! declares its shapes up front and the registry asserts them on every
//! call, so a misdeclared backend fails loudly instead of corrupting a run.
//! The callable indirection also admits subprocess or remote backends
//! without touching core code.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::encoder::FeatureMap;
use crate::error::{Error, Result};
use crate::image_io::Image;

/// Declared interface shape of one adapter.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AdapterShape {
    /// image encoder producing a k×h feature map
    Encoder { k: usize, h: usize },
    /// sentence embedder producing a d-vector
    Embedder { d: usize },
    /// language model with vocab V and embedding width e
    LanguageModel { v: usize, e: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AdapterProfile {
    pub name: String,
    pub shape: AdapterShape,
    /// where the weights/runtime come from, recorded in run manifests
    pub provenance: String,
}

/// Reference profiles for the full-scale configurations. These document
/// the expected shapes; no weights ship with this crate.
pub fn builtin_profiles() -> Vec<AdapterProfile> {
    vec![
        AdapterProfile {
            name: "clip-rn50x16".into(),
            shape: AdapterShape::Encoder { k: 144, h: 3072 },
            provenance: "CLIP RN50x16 visual backbone, flattened spatial grid".into(),
        },
        AdapterProfile {
            name: "qformer-vit-g".into(),
            // h is whatever the bound Q-Former emits; adapters declare it
            // at registration and the registry enforces their declaration
            shape: AdapterShape::Encoder { k: 257, h: 768 },
            provenance: "ViT-g with Q-Former, 257 query tokens".into(),
        },
        AdapterProfile {
            name: "mpnet-base".into(),
            shape: AdapterShape::Embedder { d: 768 },
            provenance: "MPNet sentence transformer".into(),
        },
        AdapterProfile {
            name: "gpt-j-6b".into(),
            shape: AdapterShape::LanguageModel { v: 50400, e: 4096 },
            provenance: "GPT-J 6B causal LM".into(),
        },
    ]
}

/// An encoder adapter is any callable that maps an image to a feature
/// matrix; shape enforcement happens in the registry wrapper.
pub type EncoderFn = Box<dyn Fn(&Image) -> Result<FeatureMap> + Send + Sync>;

pub struct ShapeReport {
    pub name: String,
    pub declared: AdapterShape,
    pub observed: (usize, usize),
}

#[derive(Default)]
pub struct AdapterRegistry {
    encoders: BTreeMap<String, (AdapterProfile, EncoderFn)>,
}

impl AdapterRegistry {
    pub fn new() -> Self {
        AdapterRegistry::default()
    }

    pub fn register_encoder(&mut self, profile: AdapterProfile, f: EncoderFn) -> Result<()> {
        if self.encoders.contains_key(&profile.name) {
            return Err(Error::Config(vec![format!(
                "adapter '{}' already registered",
                profile.name
            )]));
        }
        if !matches!(profile.shape, AdapterShape::Encoder { .. }) {
            return Err(Error::Config(vec![format!(
                "adapter '{}' is not an encoder profile",
                profile.name
            )]));
        }
        self.encoders.insert(profile.name.clone(), (profile, f));
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.encoders.keys().map(String::as_str).collect()
    }

    pub fn profile(&self, name: &str) -> Result<&AdapterProfile> {
        self.encoders
            .get(name)
            .map(|(p, _)| p)
            .ok_or_else(|| Error::UnknownAdapter(name.to_string()))
    }

    /// Runs the adapter and asserts its declared (k, h) on the output.
    pub fn encode(&self, name: &str, image: &Image) -> Result<FeatureMap> {
        let (profile, f) = self
            .encoders
            .get(name)
            .ok_or_else(|| Error::UnknownAdapter(name.to_string()))?;
        let AdapterShape::Encoder { k, h } = profile.shape else {
            return Err(Error::UnknownAdapter(name.to_string()));
        };
        let out = f(image)?;
        if out.k() != k || out.h() != h {
            return Err(Error::AdapterShape {
                adapter: profile.name.clone(),
                declared: format!("({k}, {h})"),
                observed: format!("({}, {})", out.k(), out.h()),
            });
        }
        Ok(out)
    }

    /// Runs the adapter on a sample input and reports declared vs
    /// observed shapes; errors if they disagree.
    pub fn probe(&self, name: &str, sample: &Image) -> Result<ShapeReport> {
        let out = self.encode(name, sample)?;
        let profile = self.profile(name)?;
        Ok(ShapeReport {
            name: profile.name.clone(),
            declared: profile.shape.clone(),
            observed: (out.k(), out.h()),
        })
    }
}
