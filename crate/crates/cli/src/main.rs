//! `vixen` — image-difference captioning pipeline driver.

mod config;
mod pipeline;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use vixen_core::dataset::{
    augment_with_llm, build_fewshot_prompt, filter_min_score, load_manifest, manifest_to_string,
    save_manifest, score_stats, split, validate_image_refs, MockClient, SplitSpec,
};
#[cfg(feature = "http-client")]
use vixen_core::dataset::HttpCompletionClient;
use vixen_core::metrics::{evaluate_corpus, EvalPair, HashedBowEmbedder, DEFAULT_THRESHOLDS};

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "vixen", version, about = "Image-difference captioning: train, caption, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the projection layer on a manifest of image pairs
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Generate change summaries for a manifest using a trained checkpoint
    Caption {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Vocabulary file; defaults to vocab.txt next to the checkpoint
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score predictions against manifest references
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Correspondence-score thresholds; repeatable. Empty uses 3, 4, 5.
        #[arg(long = "threshold")]
        thresholds: Vec<f64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Dump the few-shot summarization prompt for every record
    Prompts {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill missing change summaries through a completion endpoint
    Augment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the deterministic in-process mock client instead of HTTP
        #[arg(long)]
        mock: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Manifest utilities
    Dataset {
        #[command(subcommand)]
        action: DatasetAction,
    },
}

#[derive(Subcommand)]
enum DatasetAction {
    /// Validate a manifest; exits nonzero listing every problem
    Validate {
        #[arg(long)]
        manifest: PathBuf,
        /// Also check that local image paths exist
        #[arg(long)]
        check_images: bool,
        #[arg(long, default_value = ".")]
        image_root: PathBuf,
    },
    /// Correspondence-score histogram
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seeded fractional split into named partitions
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// e.g. train=0.8,val=0.1,test=0.1
        #[arg(long)]
        fractions: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Keep records with correspondence score >= the cutoff
    Filter {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        min_score: f64,
    },
}

fn load_config(path: Option<&PathBuf>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path.map(PathBuf::as_path))?;
    cfg.apply(overrides);
    Ok(cfg)
}

fn cmd_eval(
    cfg: &RunConfig,
    predictions: &Path,
    manifest: &Path,
    thresholds: &[f64],
    out: &Path,
) -> Result<()> {
    let records = load_manifest(manifest)?;
    let mut by_id: HashMap<&str, (&str, Option<f64>)> = HashMap::new();
    for rec in &records {
        let Some(summary) = rec.change_summary.as_deref() else {
            bail!("record '{}' has no change_summary to use as a reference", rec.id);
        };
        by_id.insert(&rec.id, (summary, rec.correspondence_score));
    }

    let text = std::fs::read_to_string(predictions)
        .with_context(|| format!("reading predictions {}", predictions.display()))?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(line)
            .with_context(|| format!("predictions line {}", lineno + 1))?;
        let id = v["id"]
            .as_str()
            .with_context(|| format!("predictions line {}: missing id", lineno + 1))?;
        let candidate = v["candidate"]
            .as_str()
            .with_context(|| format!("predictions line {}: missing candidate", lineno + 1))?;
        let Some(&(reference, score)) = by_id.get(id) else {
            bail!("prediction id '{id}' not present in the manifest");
        };
        pairs.push(EvalPair::new(candidate, vec![reference.to_string()], score)?);
    }
    if pairs.is_empty() {
        bail!("no predictions to evaluate");
    }

    let thresholds: Vec<f64> = if !thresholds.is_empty() {
        thresholds.to_vec()
    } else {
        cfg.eval
            .thresholds
            .clone()
            .unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec())
    };
    let report = evaluate_corpus(&pairs, &thresholds, &HashedBowEmbedder::default())?;

    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    std::fs::write(out.join("report.csv"), report.to_csv())?;
    print!("{}", report.to_csv());
    Ok(())
}

fn cmd_prompts(manifest: &Path, out: &Path) -> Result<()> {
    let records = load_manifest(manifest)?;
    std::fs::create_dir_all(out)?;
    let mut lines = String::new();
    for rec in &records {
        let prompt = build_fewshot_prompt(rec)?;
        lines.push_str(&serde_json::to_string(
            &serde_json::json!({ "id": rec.id, "prompt": prompt }),
        )?);
        lines.push('\n');
    }
    let path = out.join("prompts.jsonl");
    std::fs::write(&path, lines)?;
    println!("wrote {} prompt(s) to {}", records.len(), path.display());
    Ok(())
}

fn cmd_augment(cfg: &RunConfig, manifest: &Path, out: &Path, mock: bool) -> Result<()> {
    let mut records = load_manifest(manifest)?;
    let audit = if mock {
        let client = MockClient::new();
        augment_with_llm(&mut records, &client, &cfg.llm)?
    } else {
        #[cfg(feature = "http-client")]
        {
            let client = HttpCompletionClient::new(cfg.llm.clone())?;
            augment_with_llm(&mut records, &client, &cfg.llm)?
        }
        #[cfg(not(feature = "http-client"))]
        bail!("this build has no HTTP client; rerun with --mock or rebuild with the http-client feature");
    };
    std::fs::create_dir_all(out)?;
    save_manifest(&records, out.join("augmented.jsonl"))?;
    std::fs::write(out.join("augment_audit.json"), serde_json::to_string_pretty(&audit)?)?;
    let filled = records.iter().filter(|r| r.change_summary.is_some()).count();
    println!(
        "{}/{} records have change summaries; manifest and audit log in {}",
        filled,
        records.len(),
        out.display()
    );
    Ok(())
}

fn parse_fractions(spec: &str) -> Result<Vec<(String, f64)>> {
    let mut parts = Vec::new();
    for item in spec.split(',') {
        let (name, frac) = item
            .split_once('=')
            .with_context(|| format!("bad fraction '{item}', expected name=fraction"))?;
        parts.push((name.trim().to_string(), frac.trim().parse::<f64>()?));
    }
    Ok(parts)
}

fn cmd_dataset(action: DatasetAction) -> Result<()> {
    match action {
        DatasetAction::Validate {
            manifest,
            check_images,
            image_root,
        } => {
            let records = load_manifest(&manifest)?;
            if check_images {
                validate_image_refs(&records, &image_root)?;
            }
            println!("ok: {} record(s)", records.len());
        }
        DatasetAction::Stats { manifest, out } => {
            let records = load_manifest(&manifest)?;
            let stats = score_stats(&records);
            if stats.empty {
                println!("no scored records ({} unscored)", stats.unscored);
            } else {
                for (i, (&c, &p)) in stats.counts.iter().zip(stats.percentages.iter()).enumerate() {
                    println!("score {}: {} ({:.1}%)", i + 1, c, p);
                }
                println!("scored {} / unscored {}", stats.scored, stats.unscored);
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("score_stats.json"), serde_json::to_string_pretty(&stats)?)?;
            }
        }
        DatasetAction::Split {
            manifest,
            out,
            fractions,
            seed,
        } => {
            let records = load_manifest(&manifest)?;
            let spec = SplitSpec::Fractions {
                parts: parse_fractions(&fractions)?,
                seed,
            };
            let parts = split(&records, &spec)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("split.json"), serde_json::to_string_pretty(&parts)?)?;
            for (name, ids) in &parts {
                let subset: Vec<_> = records.iter().filter(|r| ids.contains(&r.id)).cloned().collect();
                std::fs::write(out.join(format!("{name}.jsonl")), manifest_to_string(&subset)?)?;
                println!("{name}: {} record(s)", subset.len());
            }
        }
        DatasetAction::Filter {
            manifest,
            out,
            min_score,
        } => {
            let records = load_manifest(&manifest)?;
            let kept = filter_min_score(&records, min_score);
            std::fs::create_dir_all(&out)?;
            save_manifest(&kept, out.join("filtered.jsonl"))?;
            println!("kept {}/{} record(s) with score >= {min_score}", kept.len(), records.len());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train {
            config,
            out,
            overrides,
        } => {
            let cfg = load_config(config.as_ref(), &overrides)?;
            cfg.echo(&out, "train")?;
            pipeline::cmd_train(&cfg, &out)
        }
        Command::Caption {
            config,
            checkpoint,
            vocab,
            manifest,
            out,
            overrides,
        } => {
            let cfg = load_config(config.as_ref(), &overrides)?;
            cfg.echo(&out, "caption")?;
            pipeline::cmd_caption(&cfg, &checkpoint, vocab.as_deref(), &manifest, &out)
        }
        Command::Eval {
            config,
            predictions,
            manifest,
            out,
            thresholds,
            overrides,
        } => {
            let cfg = load_config(config.as_ref(), &overrides)?;
            cfg.echo(&out, "eval")?;
            cmd_eval(&cfg, &predictions, &manifest, &thresholds, &out)
        }
        Command::Prompts { manifest, out } => cmd_prompts(&manifest, &out),
        Command::Augment {
            config,
            manifest,
            out,
            mock,
            overrides,
        } => {
            let cfg = load_config(config.as_ref(), &overrides)?;
            cfg.echo(&out, "augment")?;
            cmd_augment(&cfg, &manifest, &out, mock)
        }
        Command::Dataset { action } => cmd_dataset(action),
    }
}
