//! Distractor-augmented training of the projection layer.
//!
//! Everything except the projection is frozen. Each record independently
//! becomes a distractor pair (same image twice, "no difference" target) with
//! probability p_d. The default schedule is two epochs at p_d = 0 followed
//! by two epochs at p_d = 0.5. Gradient accumulation implements the
//! effective-batch arithmetic: parameters update once per
//! `accumulation_steps` micro-batches.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::ImageEncoder;
use crate::error::{Error, Result};
use crate::fusion::{
    assemble_prompt, fuse, fuse_backward, project, project_backward, FusionStrategy,
    ProjectionCheckpoint, ProjectionLayer,
};
use crate::image_io::Image;
use crate::lm::{caption_loss_with_grad, LanguageModel};
use crate::tokenizer::ToyTokenizer;

/// Optimizer and schedule configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    /// Epochs per phase; default (2, 2).
    pub phase_epochs: (usize, usize),
    /// Distractor probability per phase; default (0.0, 0.5).
    pub phase_pd: (f64, f64),
    pub lr: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    pub accumulation_steps: usize,
    pub micro_batch: usize,
    pub seed: u64,
    pub max_target_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            phase_epochs: (2, 2),
            phase_pd: (0.0, 0.5),
            lr: 1e-4,
            betas: (0.9, 0.98),
            weight_decay: 0.05,
            accumulation_steps: 4,
            micro_batch: 8,
            seed: 0,
            max_target_len: 64,
        }
    }
}

impl TrainConfig {
    pub fn effective_batch(&self) -> usize {
        self.accumulation_steps * self.micro_batch
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, b) in [("beta1", self.betas.0), ("beta2", self.betas.1)] {
            if !(0.0..1.0).contains(&b) {
                problems.push(format!("{name} = {b} not in (0, 1)"));
            }
        }
        for (name, pd) in [("phase 1 p_d", self.phase_pd.0), ("phase 2 p_d", self.phase_pd.1)] {
            if !(0.0..=1.0).contains(&pd) {
                problems.push(format!("{name} = {pd} not in [0, 1]"));
            }
        }
        if self.lr <= 0.0 {
            problems.push(format!("lr = {} not positive", self.lr));
        }
        if self.accumulation_steps == 0 || self.micro_batch == 0 {
            problems.push("accumulation_steps and micro_batch must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Target sentences used for distractor pairs, all meaning "no change".
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NoDifferencePool {
    pub sentences: Vec<String>,
}

impl Default for NoDifferencePool {
    fn default() -> Self {
        NoDifferencePool {
            sentences: vec![
                "There is no difference between the images.".into(),
                "The two images are identical.".into(),
                "Both images are the same.".into(),
                "No changes have been made to the image.".into(),
                "The images show no differences.".into(),
                "Nothing has changed between the two images.".into(),
                "The second image is unchanged from the first.".into(),
                "No edits are visible between the images.".into(),
            ],
        }
    }
}

/// One training record held in memory.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub src: Image,
    pub edit: Image,
    pub summary: String,
}

/// One sampled batch item; distractors reuse the source image on both sides.
#[derive(Debug)]
pub struct BatchItem<'a> {
    pub src: &'a Image,
    pub edit: &'a Image,
    pub target_text: String,
    pub is_distractor: bool,
}

/// Per-record i.i.d. distractor substitution with probability p_d.
pub fn sample_batch<'a>(
    records: &'a [TrainExample],
    p_d: f64,
    pool: &NoDifferencePool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<BatchItem<'a>>> {
    if p_d > 0.0 && pool.sentences.is_empty() {
        return Err(Error::EmptyDistractorPool(p_d));
    }
    let mut batch = Vec::with_capacity(records.len());
    for rec in records {
        let is_distractor = p_d > 0.0 && rng.gen::<f64>() < p_d;
        if is_distractor {
            let idx = rng.gen_range(0..pool.sentences.len());
            batch.push(BatchItem {
                src: &rec.src,
                edit: &rec.src,
                target_text: pool.sentences[idx].clone(),
                is_distractor: true,
            });
        } else {
            batch.push(BatchItem {
                src: &rec.src,
                edit: &rec.edit,
                target_text: rec.summary.clone(),
                is_distractor: false,
            });
        }
    }
    Ok(batch)
}

/// Frozen encoder + frozen LM + the one trainable projection.
pub struct ModelBundle {
    pub encoder: Box<dyn ImageEncoder>,
    pub lm: Box<dyn LanguageModel>,
    pub tokenizer: ToyTokenizer,
    pub projection: ProjectionLayer,
    pub fusion: FusionStrategy,
    pub prefix_text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct AdamWState {
    step: u64,
    m_weight: Vec<f64>,
    v_weight: Vec<f64>,
    m_bias: Vec<f64>,
    v_bias: Vec<f64>,
}

impl AdamWState {
    fn new(e: usize, h: usize) -> Self {
        AdamWState {
            step: 0,
            m_weight: vec![0.0; e * h],
            v_weight: vec![0.0; e * h],
            m_bias: vec![0.0; e],
            v_bias: vec![0.0; e],
        }
    }
}

const ADAM_EPS: f64 = 1e-8;

fn adamw_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    cfg: &TrainConfig,
) {
    let (b1, b2) = cfg.betas;
    let bc1 = 1.0 - b1.powi(step as i32);
    let bc2 = 1.0 - b2.powi(step as i32);
    for i in 0..param.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
        v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        param[i] -= cfg.lr * (mhat / (vhat.sqrt() + ADAM_EPS) + cfg.weight_decay * param[i]);
    }
}

/// Gradient accumulator across micro-batches.
struct Accumulator {
    grad_weight: Array2<f64>,
    grad_bias: Array1<f64>,
    items: usize,
    micro_batches: usize,
}

impl Accumulator {
    fn new(e: usize, h: usize) -> Self {
        Accumulator {
            grad_weight: Array2::zeros((e, h)),
            grad_bias: Array1::zeros(e),
            items: 0,
            micro_batches: 0,
        }
    }

    fn clear(&mut self) {
        self.grad_weight.fill(0.0);
        self.grad_bias.fill(0.0);
        self.items = 0;
        self.micro_batches = 0;
    }
}

/// Owns the single-writer optimization loop over the projection.
pub struct Trainer {
    pub bundle: ModelBundle,
    pub config: TrainConfig,
    pub pool: NoDifferencePool,
    opt: AdamWState,
    acc: Accumulator,
    rng: ChaCha8Rng,
    global_step: u64,
    epochs_done: usize,
}

/// Per-epoch outcome of [`Trainer::run_schedule`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub phase: usize,
    pub p_d: f64,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<EpochRow>,
    pub pd_sequence: Vec<f64>,
    pub checkpoints: Vec<PathBuf>,
}

pub const TRAIN_CKPT_MAGIC: &str = "vixen-train-ckpt";
pub const TRAIN_CKPT_VERSION: u32 = 1;

/// Full training state: projection, optimizer moments, schedule position,
/// and RNG stream position. Loading reproduces the next step bitwise.
#[derive(Debug, Serialize, Deserialize)]
pub struct TrainCheckpoint {
    pub magic: String,
    pub version: u32,
    pub config: TrainConfig,
    pub projection: ProjectionCheckpoint,
    opt: AdamWState,
    pub global_step: u64,
    pub epochs_done: usize,
    rng_seed: [u8; 32],
    rng_word_pos: (u64, u64),
    rng_stream: u64,
}

impl Trainer {
    pub fn new(bundle: ModelBundle, config: TrainConfig, pool: NoDifferencePool) -> Result<Self> {
        config.validate()?;
        let e = bundle.projection.output_dim();
        let h = bundle.projection.input_dim();
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Trainer {
            bundle,
            config,
            pool,
            opt: AdamWState::new(e, h),
            acc: Accumulator::new(e, h),
            rng,
            global_step: 0,
            epochs_done: 0,
        })
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    /// Loss and prompt for one pair under the current projection.
    fn forward_item(&self, item: &BatchItem<'_>) -> Result<(f64, ItemGrads)> {
        let f = self.bundle.encoder.encode(item.src)?;
        let f_prime = self.bundle.encoder.encode(item.edit)?;
        let p = project(&f, &self.bundle.projection)?;
        let p_prime = project(&f_prime, &self.bundle.projection)?;
        let s_v = fuse(&p, &p_prime, self.bundle.fusion)?;
        let visual_len = s_v.len();
        let prompt = assemble_prompt(
            &s_v,
            &self.bundle.prefix_text,
            &self.bundle.tokenizer,
            self.bundle.lm.embedding_table(),
        )?;
        let mut target = self.bundle.tokenizer.encode_target(&item.target_text);
        target.truncate(self.config.max_target_len);
        let (loss, grad_prompt) = caption_loss_with_grad(self.bundle.lm.as_ref(), &prompt, &target)?;
        // prefix rows are frozen token embeddings; only the visual rows carry
        // gradient back to the projection
        let grad_sv = grad_prompt.slice(ndarray::s![..visual_len, ..]).to_owned();
        Ok((
            loss,
            ItemGrads {
                f,
                f_prime,
                p,
                p_prime,
                grad_sv,
            },
        ))
    }

    /// One micro-batch: accumulate projection gradients, update the weights
    /// once every `accumulation_steps` micro-batches. Returns the mean loss
    /// over the micro-batch.
    pub fn train_step(&mut self, batch: &[BatchItem<'_>]) -> Result<f64> {
        let mut total_loss = 0.0;
        for item in batch {
            let (loss, grads) = self.forward_item(item)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: self.global_step,
                    detail: format!(
                        "loss={loss} on target '{}' (distractor={})",
                        item.target_text, item.is_distractor
                    ),
                });
            }
            total_loss += loss;
            let (dp, dp_prime) = fuse_backward(&grads.grad_sv, &grads.p, &grads.p_prime, self.bundle.fusion);
            project_backward(&dp, &grads.f, &mut self.acc.grad_weight, &mut self.acc.grad_bias);
            project_backward(&dp_prime, &grads.f_prime, &mut self.acc.grad_weight, &mut self.acc.grad_bias);
            self.acc.items += 1;
        }
        self.acc.micro_batches += 1;
        self.global_step += 1;
        if self.acc.micro_batches >= self.config.accumulation_steps {
            self.apply_update();
        }
        Ok(total_loss / batch.len().max(1) as f64)
    }

    /// Flushes any partially accumulated gradient (used at epoch boundaries).
    pub fn flush(&mut self) {
        if self.acc.items > 0 {
            self.apply_update();
        }
    }

    fn apply_update(&mut self) {
        let n = self.acc.items.max(1) as f64;
        let gw: Vec<f64> = self.acc.grad_weight.iter().map(|g| g / n).collect();
        let gb: Vec<f64> = self.acc.grad_bias.iter().map(|g| g / n).collect();
        self.opt.step += 1;
        let step = self.opt.step;
        adamw_update(
            self.bundle.projection.weight.as_slice_mut().expect("contiguous"),
            &gw,
            &mut self.opt.m_weight,
            &mut self.opt.v_weight,
            step,
            &self.config,
        );
        adamw_update(
            self.bundle.projection.bias.as_slice_mut().expect("contiguous"),
            &gb,
            &mut self.opt.m_bias,
            &mut self.opt.v_bias,
            step,
            &self.config,
        );
        self.acc.clear();
    }

    /// p_d for a given zero-based epoch index under the two-phase schedule.
    pub fn pd_for_epoch(&self, epoch: usize) -> Option<f64> {
        let (e1, e2) = self.config.phase_epochs;
        if epoch < e1 {
            Some(self.config.phase_pd.0)
        } else if epoch < e1 + e2 {
            Some(self.config.phase_pd.1)
        } else {
            None
        }
    }

    /// Runs the full two-phase schedule. When `out_dir` is given, emits a
    /// per-epoch checkpoint, a loss-curve CSV, and a schedule manifest.
    pub fn run_schedule(&mut self, data: &[TrainExample], out_dir: Option<&Path>) -> Result<RunReport> {
        if data.is_empty() {
            return Err(Error::Config(vec!["training dataset is empty".into()]));
        }
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
        }
        let total_epochs = self.config.phase_epochs.0 + self.config.phase_epochs.1;
        let mut rows = Vec::new();
        let mut pd_sequence = Vec::new();
        let mut checkpoints = Vec::new();

        while self.epochs_done < total_epochs {
            let epoch = self.epochs_done;
            let p_d = self.pd_for_epoch(epoch).expect("epoch in schedule");
            let phase = if epoch < self.config.phase_epochs.0 { 1 } else { 2 };
            pd_sequence.push(p_d);

            // seeded shuffle, then fixed-size micro-batches
            let mut order: Vec<usize> = (0..data.len()).collect();
            for i in (1..order.len()).rev() {
                let j = self.rng.gen_range(0..=i);
                order.swap(i, j);
            }
            let mut epoch_loss = 0.0;
            let mut n_batches = 0usize;
            for chunk in order.chunks(self.config.micro_batch) {
                let records: Vec<TrainExample> = chunk.iter().map(|&i| data[i].clone()).collect();
                let batch = sample_batch(&records, p_d, &self.pool, &mut self.rng)?;
                epoch_loss += self.train_step(&batch)?;
                n_batches += 1;
            }
            self.flush();
            self.epochs_done += 1;

            let mean_loss = epoch_loss / n_batches.max(1) as f64;
            rows.push(EpochRow {
                epoch,
                phase,
                p_d,
                mean_loss,
            });
            if let Some(dir) = out_dir {
                let path = dir.join(format!("ckpt_epoch_{epoch}.json"));
                self.save_checkpoint(&path)?;
                checkpoints.push(path);
            }
        }

        if let Some(dir) = out_dir {
            let mut csv = String::from("epoch,phase,p_d,mean_loss\n");
            for r in &rows {
                let _ = writeln!(csv, "{},{},{},{}", r.epoch, r.phase, r.p_d, r.mean_loss);
            }
            std::fs::write(dir.join("loss_curve.csv"), csv)?;
            let manifest = serde_json::json!({
                "config": self.config,
                "pd_sequence": pd_sequence,
                "epochs": rows.len(),
                "fusion": self.bundle.fusion.to_string(),
                "prefix_text": self.bundle.prefix_text,
                "encoder_checksum": format!("{:016x}", self.bundle.encoder.checksum()),
                "lm_checksum": format!("{:016x}", self.bundle.lm.checksum()),
            });
            std::fs::write(dir.join("run_manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        }

        Ok(RunReport {
            rows,
            pd_sequence,
            checkpoints,
        })
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let ck = TrainCheckpoint {
            magic: TRAIN_CKPT_MAGIC.into(),
            version: TRAIN_CKPT_VERSION,
            config: self.config.clone(),
            projection: ProjectionCheckpoint::from_layer(&self.bundle.projection),
            opt: self.opt.clone(),
            global_step: self.global_step,
            epochs_done: self.epochs_done,
            rng_seed: self.rng.get_seed(),
            rng_word_pos: {
                let pos = self.rng.get_word_pos();
                ((pos >> 64) as u64, pos as u64)
            },
            rng_stream: self.rng.get_stream(),
        };
        std::fs::write(path, serde_json::to_string(&ck)?)?;
        Ok(())
    }

    /// Restores trainer state from a checkpoint. The bundle's frozen parts
    /// must match the one the checkpoint was written with; only shape
    /// compatibility is enforced here unless `force` is unset and the config
    /// differs.
    pub fn load_checkpoint(&mut self, path: &Path, force: bool) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        let ck: TrainCheckpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.magic != TRAIN_CKPT_MAGIC {
            return Err(Error::Checkpoint(format!("bad magic '{}'", ck.magic)));
        }
        if ck.version != TRAIN_CKPT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        if ck.config != self.config && !force {
            return Err(Error::Checkpoint(
                "checkpoint config differs from trainer config; pass force to override".into(),
            ));
        }
        let projection = ck.projection.into_layer()?;
        if projection.input_dim() != self.bundle.projection.input_dim()
            || projection.output_dim() != self.bundle.projection.output_dim()
        {
            return Err(Error::Checkpoint("projection shape mismatch".into()));
        }
        self.bundle.projection = projection;
        self.opt = ck.opt;
        self.global_step = ck.global_step;
        self.epochs_done = ck.epochs_done;
        let mut rng = ChaCha8Rng::from_seed(ck.rng_seed);
        rng.set_stream(ck.rng_stream);
        rng.set_word_pos(((ck.rng_word_pos.0 as u128) << 64) | ck.rng_word_pos.1 as u128);
        self.rng = rng;
        Ok(())
    }
}

struct ItemGrads {
    f: crate::encoder::FeatureMap,
    f_prime: crate::encoder::FeatureMap,
    p: Array2<f64>,
    p_prime: Array2<f64>,
    grad_sv: Array2<f64>,
}
