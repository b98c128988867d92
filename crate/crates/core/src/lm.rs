//! Frozen causal language model interface, captioning loss, and decoding.
//!
//! The LM consumes a soft prompt (rows in embedding space) followed by
//! embedded target tokens and scores next tokens. Models are frozen: the
//! trainer never touches their parameters, but gradients must still flow
//! *through* the model back to the soft prompt, so implementations provide
//! an input-gradient pass alongside the forward pass.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fusion::SoftPrompt;
use crate::rng::{checksum_f64, SplitMix64};
use crate::tokenizer::{ToyTokenizer, EOS_ID};

/// A frozen causal LM over embedding-space input rows.
///
/// `forward` returns per-position next-token logits (seq×V). `backward_rows`
/// returns the gradient of a scalar loss w.r.t. the input rows, given the
/// upstream gradient on the logits. Implementations must be pure: identical
/// inputs yield bitwise-identical outputs.
pub trait LanguageModel: Send + Sync {
    fn vocab_size(&self) -> usize;
    fn embed_dim(&self) -> usize;
    fn embedding_table(&self) -> ArrayView2<'_, f64>;
    fn forward(&self, rows: &Array2<f64>) -> Array2<f64>;
    fn backward_rows(&self, rows: &Array2<f64>, dlogits: &Array2<f64>) -> Array2<f64>;

    /// Flattened frozen parameters, for the frozen-weight audit.
    fn parameters(&self) -> Vec<f64>;

    fn checksum(&self) -> u64 {
        checksum_f64(&self.parameters())
    }

    fn embed_tokens(&self, ids: &[usize]) -> Result<Array2<f64>> {
        let table = self.embedding_table();
        let mut out = Array2::zeros((ids.len(), self.embed_dim()));
        for (i, &id) in ids.iter().enumerate() {
            if id >= self.vocab_size() {
                return Err(Error::TokenOutOfRange { id, vocab: self.vocab_size() });
            }
            out.row_mut(i).assign(&table.row(id));
        }
        Ok(out)
    }
}

pub fn log_softmax(row: ArrayView1<f64>) -> Array1<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    row.mapv(|v| v - lse)
}

fn softmax_row(row: ArrayView1<f64>) -> Array1<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = row.mapv(|v| (v - max).exp());
    let sum = out.sum();
    out /= sum;
    out
}

/// LM with all-equal logits; every next-token distribution is uniform.
pub struct UniformLm {
    vocab: usize,
    embed: usize,
    table: Array2<f64>,
}

impl UniformLm {
    pub fn new(vocab: usize, embed: usize) -> Self {
        UniformLm {
            vocab,
            embed,
            table: Array2::zeros((vocab, embed)),
        }
    }
}

impl LanguageModel for UniformLm {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn embed_dim(&self) -> usize {
        self.embed
    }

    fn embedding_table(&self) -> ArrayView2<'_, f64> {
        self.table.view()
    }

    fn forward(&self, rows: &Array2<f64>) -> Array2<f64> {
        Array2::zeros((rows.nrows(), self.vocab))
    }

    fn backward_rows(&self, rows: &Array2<f64>, _dlogits: &Array2<f64>) -> Array2<f64> {
        Array2::zeros(rows.dim())
    }

    fn parameters(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Configuration of the tiny from-scratch causal transformer.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct TinyLmConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_positions: usize,
    pub seed: u64,
}

impl Default for TinyLmConfig {
    fn default() -> Self {
        TinyLmConfig {
            vocab_size: 300,
            embed_dim: 32,
            n_layers: 2,
            n_heads: 4,
            max_positions: 128,
            seed: 0,
        }
    }
}

struct Block {
    ln1_g: Array1<f64>,
    ln1_b: Array1<f64>,
    wq: Array2<f64>, // e×e, out = x · w^T
    wk: Array2<f64>,
    wv: Array2<f64>,
    wo: Array2<f64>,
    ln2_g: Array1<f64>,
    ln2_b: Array1<f64>,
    w1: Array2<f64>, // 4e×e
    w2: Array2<f64>, // e×4e
}

/// Tiny pre-norm causal transformer, frozen after seeded construction.
///
/// Parameter draw order from a SplitMix64 stream on `seed` (matched by the
/// golden-file generator): token table V×e at ±0.08, positional table P×e at
/// ±0.08, then per block wq, wk, wv, wo at ±1/√e, w1 (4e×e) at ±1/√e,
/// w2 (e×4e) at ±1/√(4e), and finally the output head V×e at ±1/√e. All
/// biases are zero; layernorm gains start at one. GELU uses the tanh
/// approximation; layernorm epsilon is 1e-5.
pub struct TinyTransformerLm {
    cfg: TinyLmConfig,
    wte: Array2<f64>,
    wpe: Array2<f64>,
    blocks: Vec<Block>,
    lnf_g: Array1<f64>,
    lnf_b: Array1<f64>,
    w_out: Array2<f64>, // V×e
}

const LN_EPS: f64 = 1e-5;
const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_K * (x + GELU_C * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * x * x)
}

struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, g: &Array1<f64>, b: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let n = x.nrows();
    let e = x.ncols();
    let mut xhat = Array2::zeros((n, e));
    let mut inv_std = Array1::zeros(n);
    let mut out = Array2::zeros((n, e));
    for i in 0..n {
        let row = x.row(i);
        let mean = row.sum() / e as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / e as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std[i] = is;
        for j in 0..e {
            let xh = (x[[i, j]] - mean) * is;
            xhat[[i, j]] = xh;
            out[[i, j]] = xh * g[j] + b[j];
        }
    }
    (out, LnCache { xhat, inv_std })
}

fn layer_norm_backward(dy: &Array2<f64>, cache: &LnCache, g: &Array1<f64>) -> Array2<f64> {
    let (n, e) = dy.dim();
    let mut dx = Array2::zeros((n, e));
    for i in 0..n {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for j in 0..e {
            let dxhat = dy[[i, j]] * g[j];
            m1 += dxhat;
            m2 += dxhat * cache.xhat[[i, j]];
        }
        m1 /= e as f64;
        m2 /= e as f64;
        for j in 0..e {
            let dxhat = dy[[i, j]] * g[j];
            dx[[i, j]] = cache.inv_std[i] * (dxhat - m1 - cache.xhat[[i, j]] * m2);
        }
    }
    dx
}

struct BlockCache {
    ln1: LnCache,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>, // per head, n×n causal softmax weights
    ln2: LnCache,
    h1: Array2<f64>,
}

struct ForwardCache {
    blocks: Vec<BlockCache>,
    lnf: LnCache,
}

impl TinyTransformerLm {
    pub fn new(cfg: TinyLmConfig) -> Self {
        assert!(cfg.embed_dim % cfg.n_heads == 0, "embed_dim must divide by n_heads");
        let e = cfg.embed_dim;
        let v = cfg.vocab_size;
        let mut rng = SplitMix64::new(cfg.seed);
        let draw = |rows: usize, cols: usize, scale: f64, rng: &mut SplitMix64| {
            let mut buf = vec![0.0; rows * cols];
            rng.fill_uniform(&mut buf, scale);
            Array2::from_shape_vec((rows, cols), buf).expect("shape")
        };
        let emb_scale = 0.08;
        let w_scale = 1.0 / (e as f64).sqrt();
        let wte = draw(v, e, emb_scale, &mut rng);
        let wpe = draw(cfg.max_positions, e, emb_scale, &mut rng);
        let mut blocks = Vec::with_capacity(cfg.n_layers);
        for _ in 0..cfg.n_layers {
            blocks.push(Block {
                ln1_g: Array1::ones(e),
                ln1_b: Array1::zeros(e),
                wq: draw(e, e, w_scale, &mut rng),
                wk: draw(e, e, w_scale, &mut rng),
                wv: draw(e, e, w_scale, &mut rng),
                wo: draw(e, e, w_scale, &mut rng),
                ln2_g: Array1::ones(e),
                ln2_b: Array1::zeros(e),
                w1: draw(4 * e, e, w_scale, &mut rng),
                w2: draw(e, 4 * e, 1.0 / (4.0 * e as f64).sqrt(), &mut rng),
            });
        }
        let w_out = draw(v, e, w_scale, &mut rng);
        TinyTransformerLm {
            cfg,
            wte,
            wpe,
            blocks,
            lnf_g: Array1::ones(e),
            lnf_b: Array1::zeros(e),
            w_out,
        }
    }

    pub fn config(&self) -> &TinyLmConfig {
        &self.cfg
    }

    fn forward_cached(&self, rows: &Array2<f64>) -> (Array2<f64>, ForwardCache) {
        let n = rows.nrows();
        assert!(n <= self.cfg.max_positions, "sequence longer than max_positions");
        let e = self.cfg.embed_dim;
        let heads = self.cfg.n_heads;
        let d = e / heads;
        let scale = 1.0 / (d as f64).sqrt();

        let mut x = rows + &self.wpe.slice(s![..n, ..]);
        let mut caches = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let (a, ln1) = layer_norm(&x, &blk.ln1_g, &blk.ln1_b);
            let q = a.dot(&blk.wq.t());
            let k = a.dot(&blk.wk.t());
            let v = a.dot(&blk.wv.t());
            let mut o = Array2::zeros((n, e));
            let mut attn_heads = Vec::with_capacity(heads);
            for h in 0..heads {
                let qs = q.slice(s![.., h * d..(h + 1) * d]);
                let ks = k.slice(s![.., h * d..(h + 1) * d]);
                let vs = v.slice(s![.., h * d..(h + 1) * d]);
                let mut attn = Array2::zeros((n, n));
                for i in 0..n {
                    // causal: attend to positions <= i
                    let mut max = f64::NEG_INFINITY;
                    let mut scores = vec![0.0; i + 1];
                    for j in 0..=i {
                        let sc = qs.row(i).dot(&ks.row(j)) * scale;
                        scores[j] = sc;
                        if sc > max {
                            max = sc;
                        }
                    }
                    let mut sum = 0.0;
                    for j in 0..=i {
                        scores[j] = (scores[j] - max).exp();
                        sum += scores[j];
                    }
                    for j in 0..=i {
                        attn[[i, j]] = scores[j] / sum;
                    }
                }
                for i in 0..n {
                    for j in 0..=i {
                        let w = attn[[i, j]];
                        for c in 0..d {
                            o[[i, h * d + c]] += w * vs[[j, c]];
                        }
                    }
                }
                attn_heads.push(attn);
            }
            let attn_out = o.dot(&blk.wo.t());
            let x_mid = &x + &attn_out;
            let (a2, ln2) = layer_norm(&x_mid, &blk.ln2_g, &blk.ln2_b);
            let h1 = a2.dot(&blk.w1.t());
            let h2 = h1.mapv(gelu);
            let mlp_out = h2.dot(&blk.w2.t());
            let x_out = &x_mid + &mlp_out;
            caches.push(BlockCache {
                ln1,
                q,
                k,
                v,
                attn: attn_heads,
                ln2,
                h1,
            });
            x = x_out;
        }
        let (f, lnf) = layer_norm(&x, &self.lnf_g, &self.lnf_b);
        let logits = f.dot(&self.w_out.t());
        (logits, ForwardCache { blocks: caches, lnf })
    }
}

impl LanguageModel for TinyTransformerLm {
    fn vocab_size(&self) -> usize {
        self.cfg.vocab_size
    }

    fn embed_dim(&self) -> usize {
        self.cfg.embed_dim
    }

    fn embedding_table(&self) -> ArrayView2<'_, f64> {
        self.wte.view()
    }

    fn forward(&self, rows: &Array2<f64>) -> Array2<f64> {
        self.forward_cached(rows).0
    }

    fn backward_rows(&self, rows: &Array2<f64>, dlogits: &Array2<f64>) -> Array2<f64> {
        let (_, cache) = self.forward_cached(rows);
        let n = rows.nrows();
        let e = self.cfg.embed_dim;
        let heads = self.cfg.n_heads;
        let d = e / heads;
        let scale = 1.0 / (d as f64).sqrt();

        let df = dlogits.dot(&self.w_out);
        let mut dx = layer_norm_backward(&df, &cache.lnf, &self.lnf_g);

        for (blk, bc) in self.blocks.iter().zip(cache.blocks.iter()).rev() {
            // MLP block backward: x_out = x_mid + w2·gelu(w1·ln2(x_mid))
            let dh2 = dx.dot(&blk.w2);
            let mut dh1 = dh2;
            ndarray::Zip::from(&mut dh1).and(&bc.h1).for_each(|g, &x| *g *= gelu_grad(x));
            let da2 = dh1.dot(&blk.w1);
            let dx_mid = &dx + &layer_norm_backward(&da2, &bc.ln2, &blk.ln2_g);

            // Attention block backward: x_mid = x_in + wo·attn(ln1(x_in))
            let do_ = dx_mid.dot(&blk.wo);
            let mut dq = Array2::zeros((n, e));
            let mut dk = Array2::zeros((n, e));
            let mut dv = Array2::zeros((n, e));
            for h in 0..heads {
                let attn = &bc.attn[h];
                let vs = bc.v.slice(s![.., h * d..(h + 1) * d]);
                let qs = bc.q.slice(s![.., h * d..(h + 1) * d]);
                let ks = bc.k.slice(s![.., h * d..(h + 1) * d]);
                let do_h = do_.slice(s![.., h * d..(h + 1) * d]);
                // dV_h = attn^T · dO_h
                for i in 0..n {
                    for j in 0..=i {
                        let w = attn[[i, j]];
                        for c in 0..d {
                            dv[[j, h * d + c]] += w * do_h[[i, c]];
                        }
                    }
                }
                // dS via softmax backward, then to q and k
                for i in 0..n {
                    // dA[i,j] = dO_h[i]·V_h[j]
                    let mut da = vec![0.0; i + 1];
                    let mut dot = 0.0;
                    for j in 0..=i {
                        let mut acc = 0.0;
                        for c in 0..d {
                            acc += do_h[[i, c]] * vs[[j, c]];
                        }
                        da[j] = acc;
                        dot += acc * attn[[i, j]];
                    }
                    for j in 0..=i {
                        let ds = attn[[i, j]] * (da[j] - dot) * scale;
                        for c in 0..d {
                            dq[[i, h * d + c]] += ds * ks[[j, c]];
                            dk[[j, h * d + c]] += ds * qs[[i, c]];
                        }
                    }
                }
            }
            let da = dq.dot(&blk.wq) + dk.dot(&blk.wk) + dv.dot(&blk.wv);
            dx = dx_mid + layer_norm_backward(&da, &bc.ln1, &blk.ln1_g);
        }
        dx
    }

    fn parameters(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        out.extend(self.wte.iter());
        out.extend(self.wpe.iter());
        for b in &self.blocks {
            out.extend(b.ln1_g.iter());
            out.extend(b.ln1_b.iter());
            out.extend(b.wq.iter());
            out.extend(b.wk.iter());
            out.extend(b.wv.iter());
            out.extend(b.wo.iter());
            out.extend(b.ln2_g.iter());
            out.extend(b.ln2_b.iter());
            out.extend(b.w1.iter());
            out.extend(b.w2.iter());
        }
        out.extend(self.lnf_g.iter());
        out.extend(self.lnf_b.iter());
        out.extend(self.w_out.iter());
        out
    }
}

fn check_prompt_width(lm: &dyn LanguageModel, prompt: &SoftPrompt) -> Result<()> {
    if prompt.width() != lm.embed_dim() {
        return Err(Error::shape(
            "prompt width",
            format!("{}", lm.embed_dim()),
            format!("{}", prompt.width()),
        ));
    }
    Ok(())
}

/// Eq. 4 interface: log p(· | prompt, prior tokens), normalized.
pub fn next_token_logprobs(
    lm: &dyn LanguageModel,
    prompt: &SoftPrompt,
    prior_tokens: &[usize],
) -> Result<Array1<f64>> {
    check_prompt_width(lm, prompt)?;
    if prompt.is_empty() && prior_tokens.is_empty() {
        return Err(Error::InvalidTokenSequence("empty conditioning context".into()));
    }
    let emb = lm.embed_tokens(prior_tokens)?;
    let rows = ndarray::concatenate(Axis(0), &[prompt.data().view(), emb.view()]).expect("widths");
    let logits = lm.forward(&rows);
    Ok(log_softmax(logits.row(logits.nrows() - 1)))
}

/// Teacher-forcing negative log-likelihood of the target under the prompt.
pub fn caption_loss(lm: &dyn LanguageModel, prompt: &SoftPrompt, target: &[usize]) -> Result<f64> {
    Ok(caption_loss_impl(lm, prompt, target, false)?.0)
}

/// Loss plus its gradient w.r.t. the prompt rows.
pub fn caption_loss_with_grad(
    lm: &dyn LanguageModel,
    prompt: &SoftPrompt,
    target: &[usize],
) -> Result<(f64, Array2<f64>)> {
    let (loss, grad) = caption_loss_impl(lm, prompt, target, true)?;
    Ok((loss, grad.expect("grad requested")))
}

fn caption_loss_impl(
    lm: &dyn LanguageModel,
    prompt: &SoftPrompt,
    target: &[usize],
    want_grad: bool,
) -> Result<(f64, Option<Array2<f64>>)> {
    check_prompt_width(lm, prompt)?;
    let m = prompt.len();
    if target.is_empty() {
        let grad = want_grad.then(|| Array2::zeros(prompt.data().dim()));
        return Ok((0.0, grad));
    }
    if m == 0 {
        return Err(Error::InvalidTokenSequence("empty prompt with non-empty target".into()));
    }
    for &id in target {
        if id >= lm.vocab_size() {
            return Err(Error::TokenOutOfRange { id, vocab: lm.vocab_size() });
        }
    }
    // rows = prompt ++ embeddings of target[..n-1]; position m-1+i predicts target[i]
    let emb = lm.embed_tokens(&target[..target.len() - 1])?;
    let rows = ndarray::concatenate(Axis(0), &[prompt.data().view(), emb.view()]).expect("widths");
    let logits = lm.forward(&rows);

    let mut loss = 0.0;
    let mut dlogits = want_grad.then(|| Array2::zeros(logits.dim()));
    for (i, &t) in target.iter().enumerate() {
        let pos = m - 1 + i;
        let lp = log_softmax(logits.row(pos));
        loss -= lp[t];
        if let Some(dl) = dlogits.as_mut() {
            let mut p = lp.mapv(f64::exp);
            p[t] -= 1.0;
            dl.row_mut(pos).assign(&p);
        }
    }
    let grad = match dlogits {
        Some(dl) => {
            let d_rows = lm.backward_rows(&rows, &dl);
            Some(d_rows.slice(s![..m, ..]).to_owned())
        }
        None => None,
    };
    Ok((loss, grad))
}

/// Decoding mode for [`generate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecodeMode {
    Greedy,
    Sample { temperature: f64, seed: u64 },
}

/// Autoregressive decoding from a soft prompt until <eos> or `max_len` tokens.
pub fn generate(
    lm: &dyn LanguageModel,
    prompt: &SoftPrompt,
    mode: DecodeMode,
    max_len: usize,
    tokenizer: &ToyTokenizer,
) -> Result<String> {
    let ids = generate_ids(lm, prompt, mode, max_len)?;
    tokenizer.decode(&ids)
}

pub fn generate_ids(
    lm: &dyn LanguageModel,
    prompt: &SoftPrompt,
    mode: DecodeMode,
    max_len: usize,
) -> Result<Vec<usize>> {
    check_prompt_width(lm, prompt)?;
    assert!(max_len >= 1, "max_len must be >= 1");
    let mut rng = match mode {
        DecodeMode::Sample { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        DecodeMode::Greedy => None,
    };
    let mut rows = prompt.data().clone();
    let mut ids = Vec::new();
    for _ in 0..max_len {
        let logits = lm.forward(&rows);
        let last = logits.row(logits.nrows() - 1);
        let next = match mode {
            DecodeMode::Greedy => {
                let mut best = 0;
                let mut best_v = f64::NEG_INFINITY;
                for (i, &v) in last.iter().enumerate() {
                    if v > best_v {
                        best_v = v;
                        best = i;
                    }
                }
                best
            }
            DecodeMode::Sample { temperature, .. } => {
                let p = softmax_row(last.mapv(|v| v / temperature.max(1e-8)).view());
                let r: f64 = rng.as_mut().expect("sampling rng").gen();
                let mut acc = 0.0;
                let mut chosen = p.len() - 1;
                for (i, &pi) in p.iter().enumerate() {
                    acc += pi;
                    if r < acc {
                        chosen = i;
                        break;
                    }
                }
                chosen
            }
        };
        if next == EOS_ID {
            break;
        }
        ids.push(next);
        let emb = lm.embed_tokens(&[next])?;
        rows = ndarray::concatenate(Axis(0), &[rows.view(), emb.view()]).expect("widths");
    }
    Ok(ids)
}
