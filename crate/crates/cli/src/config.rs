//! Run configuration: TOML file plus command-line overrides (flags win).
//! Every command echoes its fully resolved config under the output
//! directory so a run is reproducible from its artifacts alone.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vixen_core::dataset::LlmClientConfig;
use vixen_core::fusion::{DIFFERENCES_PREFIX, EDIT_INSTRUCTIONS_PREFIX};
use vixen_core::trainer::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSection {
    pub patch_size: usize,
    pub h: usize,
    pub seed: u64,
    pub use_bias: bool,
}

impl Default for EncoderSection {
    fn default() -> Self {
        EncoderSection {
            patch_size: 8,
            h: 16,
            seed: 7,
            use_bias: false,
        }
    }
}

/// Tiny-LM hyperparameters; vocab size is derived from the tokenizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LmSection {
    pub embed_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_positions: usize,
    pub seed: u64,
}

impl Default for LmSection {
    fn default() -> Self {
        LmSection {
            embed_dim: 32,
            n_layers: 2,
            n_heads: 4,
            max_positions: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ImageSource {
    /// Decode the files referenced by the manifest (relative to image_root).
    Files,
    /// Deterministic synthetic images keyed by the image path string.
    Synthetic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    pub manifest: String,
    pub image_source: ImageSource,
    pub image_root: String,
    /// Side length of synthetic images; must divide by the encoder patch.
    pub image_size: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            manifest: String::new(),
            image_source: ImageSource::Synthetic,
            image_root: ".".into(),
            image_size: 32,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct EvalSection {
    pub thresholds: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub fusion: Option<String>,
    /// "differences" or "edit-instructions"
    pub prefix: Option<String>,
    pub encoder: EncoderSection,
    pub lm: LmSection,
    pub train: TrainConfigSection,
    pub data: DataSection,
    pub llm: LlmClientConfig,
    pub eval: EvalSection,
}

/// TrainConfig with every field optional so partial TOML sections work.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct TrainConfigSection {
    pub phase_epochs: Option<(usize, usize)>,
    pub phase_pd: Option<(f64, f64)>,
    pub lr: Option<f64>,
    pub betas: Option<(f64, f64)>,
    pub weight_decay: Option<f64>,
    pub accumulation_steps: Option<usize>,
    pub micro_batch: Option<usize>,
    pub max_target_len: Option<usize>,
}

impl TrainConfigSection {
    pub fn resolve(&self, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            phase_epochs: self.phase_epochs.unwrap_or(d.phase_epochs),
            phase_pd: self.phase_pd.unwrap_or(d.phase_pd),
            lr: self.lr.unwrap_or(d.lr),
            betas: self.betas.unwrap_or(d.betas),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            accumulation_steps: self.accumulation_steps.unwrap_or(d.accumulation_steps),
            micro_batch: self.micro_batch.unwrap_or(d.micro_batch),
            seed,
            max_target_len: self.max_target_len.unwrap_or(d.max_target_len),
        }
    }
}

/// Shared override flags; any flag set here wins over the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Global seed (training sampling and weight init derive from it)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fusion strategy: concat, sub, add, mul, or mean
    #[arg(long)]
    pub fusion: Option<String>,
    /// Distractor probability applied to both schedule phases
    #[arg(long)]
    pub pd: Option<f64>,
    /// Prompt prefix profile: differences or edit-instructions
    #[arg(long)]
    pub prefix: Option<String>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn apply(&mut self, ov: &Overrides) {
        if ov.seed.is_some() {
            self.seed = ov.seed;
        }
        if ov.fusion.is_some() {
            self.fusion = ov.fusion.clone();
        }
        if let Some(pd) = ov.pd {
            self.train.phase_pd = Some((pd, pd));
        }
        if ov.prefix.is_some() {
            self.prefix = ov.prefix.clone();
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn fusion(&self) -> Result<vixen_core::fusion::FusionStrategy> {
        Ok(vixen_core::fusion::FusionStrategy::parse(
            self.fusion.as_deref().unwrap_or("concat"),
        )?)
    }

    pub fn prefix_text(&self) -> Result<&'static str> {
        match self.prefix.as_deref().unwrap_or("differences") {
            "differences" => Ok(DIFFERENCES_PREFIX),
            "edit-instructions" => Ok(EDIT_INSTRUCTIONS_PREFIX),
            other => bail!("unknown prefix profile '{other}' (expected 'differences' or 'edit-instructions')"),
        }
    }

    /// Writes the resolved config and invocation summary under `out`.
    pub fn echo(&self, out: &Path, command: &str) -> Result<()> {
        std::fs::create_dir_all(out)?;
        let manifest = serde_json::json!({
            "command": command,
            "resolved_config": self,
        });
        std::fs::write(
            out.join("cli_manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }
}
