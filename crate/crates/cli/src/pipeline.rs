//! Model assembly and the train / caption commands.

use std::path::Path;

use anyhow::{bail, Context, Result};
use vixen_core::dataset::{load_manifest, ImagePairRecord};
use vixen_core::encoder::ToyPatchEncoder;
use vixen_core::fusion::{assemble_prompt, fuse, project, ProjectionCheckpoint, ProjectionLayer};
use vixen_core::image_io::{load_image, Image};
use vixen_core::lm::{generate, DecodeMode, TinyLmConfig, TinyTransformerLm};
use vixen_core::tokenizer::ToyTokenizer;
use vixen_core::trainer::{ModelBundle, NoDifferencePool, TrainExample, Trainer};

use crate::config::{ImageSource, RunConfig};

fn fnv1a_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

/// Resolves one image reference according to the configured source.
pub fn resolve_image(cfg: &RunConfig, image_ref: &str) -> Result<Image> {
    match cfg.data.image_source {
        ImageSource::Synthetic => Ok(Image::synthetic(
            cfg.data.image_size,
            cfg.data.image_size,
            fnv1a_str(image_ref),
        )),
        ImageSource::Files => {
            let path = Path::new(&cfg.data.image_root).join(image_ref);
            Ok(load_image(&path).with_context(|| format!("loading image {}", path.display()))?)
        }
    }
}

/// Builds the tokenizer from everything the model must be able to encode:
/// change summaries, the prompt prefix, and the no-difference pool.
pub fn build_tokenizer(
    cfg: &RunConfig,
    records: &[ImagePairRecord],
    pool: &NoDifferencePool,
) -> Result<ToyTokenizer> {
    let mut texts: Vec<&str> = records
        .iter()
        .filter_map(|r| r.change_summary.as_deref())
        .collect();
    texts.push(cfg.prefix_text()?);
    for s in &pool.sentences {
        texts.push(s);
    }
    Ok(ToyTokenizer::from_corpus(texts))
}

/// Assembles the frozen encoder + frozen LM + trainable projection bundle.
/// The projection is freshly initialized unless `projection` is given.
pub fn build_bundle(
    cfg: &RunConfig,
    tokenizer: ToyTokenizer,
    projection: Option<ProjectionLayer>,
) -> Result<ModelBundle> {
    let enc = ToyPatchEncoder::new(
        cfg.encoder.patch_size,
        cfg.encoder.h,
        cfg.encoder.seed,
        cfg.encoder.use_bias,
    );
    let lm = TinyTransformerLm::new(TinyLmConfig {
        vocab_size: tokenizer.vocab_size(),
        embed_dim: cfg.lm.embed_dim,
        n_layers: cfg.lm.n_layers,
        n_heads: cfg.lm.n_heads,
        max_positions: cfg.lm.max_positions,
        seed: cfg.lm.seed,
    });
    let projection = match projection {
        Some(p) => {
            if p.input_dim() != cfg.encoder.h || p.output_dim() != cfg.lm.embed_dim {
                bail!(
                    "checkpoint projection is {}x{}, config expects {}x{}",
                    p.output_dim(),
                    p.input_dim(),
                    cfg.lm.embed_dim,
                    cfg.encoder.h
                );
            }
            p
        }
        None => ProjectionLayer::init(cfg.encoder.h, cfg.lm.embed_dim, cfg.seed()),
    };
    Ok(ModelBundle {
        encoder: Box::new(enc),
        lm: Box::new(lm),
        tokenizer,
        projection,
        fusion: cfg.fusion()?,
        prefix_text: cfg.prefix_text()?.to_string(),
    })
}

fn load_examples(cfg: &RunConfig, records: &[ImagePairRecord]) -> Result<Vec<TrainExample>> {
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let Some(summary) = rec.change_summary.clone() else {
            bail!("record '{}' has no change_summary; run augment first", rec.id);
        };
        out.push(TrainExample {
            src: resolve_image(cfg, &rec.src_image)?,
            edit: resolve_image(cfg, &rec.edit_image)?,
            summary,
        });
    }
    Ok(out)
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    if cfg.data.manifest.is_empty() {
        bail!("no training manifest configured ([data] manifest in the config file)");
    }
    let records = load_manifest(&cfg.data.manifest)?;
    let pool = NoDifferencePool::default();
    let tokenizer = build_tokenizer(cfg, &records, &pool)?;
    std::fs::create_dir_all(out)?;
    tokenizer.save_vocab(out.join("vocab.txt"))?;

    let examples = load_examples(cfg, &records)?;
    let bundle = build_bundle(cfg, tokenizer, None)?;
    let train_cfg = cfg.train.resolve(cfg.seed());
    let mut trainer = Trainer::new(bundle, train_cfg, pool)?;
    let report = trainer.run_schedule(&examples, Some(out))?;

    for row in &report.rows {
        println!(
            "epoch {} (phase {}, p_d {}): mean loss {:.6}",
            row.epoch, row.phase, row.p_d, row.mean_loss
        );
    }
    println!(
        "wrote {} checkpoint(s), loss_curve.csv and run_manifest.json to {}",
        report.checkpoints.len(),
        out.display()
    );
    Ok(())
}

/// Reads the projection out of either a training checkpoint or a bare
/// projection checkpoint.
pub fn load_projection(path: &Path) -> Result<ProjectionLayer> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading checkpoint {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing checkpoint {}", path.display()))?;
    let node = if value.get("projection").is_some() {
        &value["projection"]
    } else {
        &value
    };
    let ck: ProjectionCheckpoint = serde_json::from_value(node.clone())
        .with_context(|| format!("checkpoint {} has no projection payload", path.display()))?;
    Ok(ck.into_layer()?)
}

pub fn cmd_caption(
    cfg: &RunConfig,
    checkpoint: &Path,
    vocab: Option<&Path>,
    manifest: &Path,
    out: &Path,
) -> Result<()> {
    let vocab_path = match vocab {
        Some(p) => p.to_path_buf(),
        // default: vocab.txt saved next to the checkpoint at train time
        None => checkpoint
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("vocab.txt"),
    };
    let tokenizer = ToyTokenizer::load_vocab(&vocab_path)?;
    let projection = load_projection(checkpoint)?;
    let bundle = build_bundle(cfg, tokenizer, Some(projection))?;
    let records = load_manifest(manifest)?;
    let max_len = cfg.train.resolve(cfg.seed()).max_target_len;

    std::fs::create_dir_all(out)?;
    let mut lines = String::new();
    for rec in &records {
        let src = resolve_image(cfg, &rec.src_image)?;
        let edit = resolve_image(cfg, &rec.edit_image)?;
        let f = bundle.encoder.encode(&src)?;
        let f_prime = bundle.encoder.encode(&edit)?;
        let p = project(&f, &bundle.projection)?;
        let p_prime = project(&f_prime, &bundle.projection)?;
        let s_v = fuse(&p, &p_prime, bundle.fusion)?;
        let prompt = assemble_prompt(
            &s_v,
            &bundle.prefix_text,
            &bundle.tokenizer,
            bundle.lm.embedding_table(),
        )?;
        let candidate = generate(
            bundle.lm.as_ref(),
            &prompt,
            DecodeMode::Greedy,
            max_len,
            &bundle.tokenizer,
        )?;
        lines.push_str(&serde_json::to_string(
            &serde_json::json!({ "id": rec.id, "candidate": candidate }),
        )?);
        lines.push('\n');
    }
    let path = out.join("predictions.jsonl");
    std::fs::write(&path, lines)?;
    println!("wrote {} prediction(s) to {}", records.len(), path.display());
    Ok(())
}
