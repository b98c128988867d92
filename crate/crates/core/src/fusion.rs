//! Trainable projection into LM embedding space and soft-prompt assembly.
//!
//! The projection layer is the only trainable parameter set in the system.
//! Projected feature maps for the two images are fused into the visual
//! prompt s^v by one of five strategies; the text prefix is appended after
//! the visual rows.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::encoder::FeatureMap;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tokenizer::ToyTokenizer;

/// Linear map from encoder width h to LM embedding width e.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionLayer {
    /// e×h
    pub weight: Array2<f64>,
    /// e
    pub bias: Array1<f64>,
}

impl ProjectionLayer {
    /// weight ~ uniform(±1/√h), bias = 0.
    pub fn init(h: usize, e: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let scale = 1.0 / (h as f64).sqrt();
        let mut w = vec![0.0; e * h];
        rng.fill_uniform(&mut w, scale);
        ProjectionLayer {
            weight: Array2::from_shape_vec((e, h), w).expect("weight shape"),
            bias: Array1::zeros(e),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.weight.iter().chain(self.bias.iter()).copied().collect()
    }

    pub fn checksum(&self) -> u64 {
        crate::rng::checksum_f64(&self.parameters())
    }
}

/// Rule for combining the two projected feature maps into s^v.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionStrategy {
    Concatenation,
    Subtraction,
    Addition,
    Multiplication,
    Mean,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 5] = [
        FusionStrategy::Concatenation,
        FusionStrategy::Subtraction,
        FusionStrategy::Addition,
        FusionStrategy::Multiplication,
        FusionStrategy::Mean,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "concat" | "concatenation" => Ok(FusionStrategy::Concatenation),
            "sub" | "subtraction" => Ok(FusionStrategy::Subtraction),
            "add" | "addition" => Ok(FusionStrategy::Addition),
            "mul" | "multiplication" => Ok(FusionStrategy::Multiplication),
            "mean" => Ok(FusionStrategy::Mean),
            other => Err(Error::Config(vec![format!("unknown fusion strategy '{other}'")])),
        }
    }

    /// Prompt length for projected inputs of k rows.
    pub fn prompt_len(&self, k: usize) -> usize {
        match self {
            FusionStrategy::Concatenation => 2 * k,
            _ => k,
        }
    }
}

impl std::fmt::Display for FusionStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FusionStrategy::Concatenation => "concatenation",
            FusionStrategy::Subtraction => "subtraction",
            FusionStrategy::Addition => "addition",
            FusionStrategy::Multiplication => "multiplication",
            FusionStrategy::Mean => "mean",
        };
        f.write_str(s)
    }
}

/// m×e matrix fed to the LM in place of token embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftPrompt {
    data: Array2<f64>,
}

impl SoftPrompt {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::shape("SoftPrompt::new", "finite entries", "non-finite entry"));
        }
        Ok(SoftPrompt { data })
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }
}

/// Row-wise affine map: output row i = weight·f_i + bias.
pub fn project(f: &FeatureMap, layer: &ProjectionLayer) -> Result<Array2<f64>> {
    if f.h() != layer.input_dim() {
        return Err(Error::shape(
            "project",
            format!("feature width {}", layer.input_dim()),
            format!("{}", f.h()),
        ));
    }
    let mut out = f.data().dot(&layer.weight.t());
    out += &layer.bias;
    Ok(out)
}

/// Combines the two projected maps into the visual soft prompt s^v.
pub fn fuse(p: &Array2<f64>, p_prime: &Array2<f64>, strategy: FusionStrategy) -> Result<SoftPrompt> {
    if p.dim() != p_prime.dim() {
        return Err(Error::shape(
            "fuse",
            format!("{:?}", p.dim()),
            format!("{:?}", p_prime.dim()),
        ));
    }
    let data = match strategy {
        FusionStrategy::Concatenation => {
            ndarray::concatenate(Axis(0), &[p.view(), p_prime.view()]).expect("same widths")
        }
        FusionStrategy::Subtraction => p - p_prime,
        FusionStrategy::Addition => p + p_prime,
        FusionStrategy::Multiplication => p * p_prime,
        FusionStrategy::Mean => (p + p_prime) * 0.5,
    };
    SoftPrompt::new(data)
}

/// Pulls an upstream gradient on s^v back to gradients on the two projected maps.
pub fn fuse_backward(
    grad: &Array2<f64>,
    p: &Array2<f64>,
    p_prime: &Array2<f64>,
    strategy: FusionStrategy,
) -> (Array2<f64>, Array2<f64>) {
    match strategy {
        FusionStrategy::Concatenation => {
            let k = p.nrows();
            let dp = grad.slice(ndarray::s![..k, ..]).to_owned();
            let dpp = grad.slice(ndarray::s![k.., ..]).to_owned();
            (dp, dpp)
        }
        FusionStrategy::Subtraction => (grad.clone(), -grad),
        FusionStrategy::Addition => (grad.clone(), grad.clone()),
        FusionStrategy::Multiplication => (grad * p_prime, grad * p),
        FusionStrategy::Mean => (grad * 0.5, grad * 0.5),
    }
}

/// Accumulates projection-parameter gradients from one projected map:
/// dW += dp^T·f, db += column sums of dp.
pub fn project_backward(
    dp: &Array2<f64>,
    f: &FeatureMap,
    grad_weight: &mut Array2<f64>,
    grad_bias: &mut Array1<f64>,
) {
    *grad_weight += &dp.t().dot(f.data());
    *grad_bias += &dp.sum_axis(Axis(0));
}

/// Prefix for the change-summary dataset profile.
pub const DIFFERENCES_PREFIX: &str = "The differences between the images are as follows: ";
/// Prefix for the instruction-style dataset profile.
pub const EDIT_INSTRUCTIONS_PREFIX: &str = "Edit instructions:";

/// Appends the embedded text prefix after the visual rows: s = [s^v, s^t].
pub fn assemble_prompt(
    s_v: &SoftPrompt,
    prefix_text: &str,
    tokenizer: &ToyTokenizer,
    embedding_table: ArrayView2<f64>,
) -> Result<SoftPrompt> {
    let e = s_v.width();
    if embedding_table.ncols() != e {
        return Err(Error::shape(
            "assemble_prompt",
            format!("embedding width {e}"),
            format!("{}", embedding_table.ncols()),
        ));
    }
    let ids = tokenizer.encode(prefix_text);
    let mut data = Array2::zeros((s_v.len() + ids.len(), e));
    data.slice_mut(ndarray::s![..s_v.len(), ..]).assign(s_v.data());
    for (row, &id) in ids.iter().enumerate() {
        if id >= embedding_table.nrows() {
            return Err(Error::TokenOutOfRange {
                id,
                vocab: embedding_table.nrows(),
            });
        }
        data.row_mut(s_v.len() + row).assign(&embedding_table.row(id));
    }
    SoftPrompt::new(data)
}

/// Versioned JSON container for projection weights, the checkpointable part
/// of the model. Layout: {magic, version, h, e, weight row-major, bias}.
#[derive(Debug, Serialize, Deserialize)]
pub struct ProjectionCheckpoint {
    pub magic: String,
    pub version: u32,
    pub h: usize,
    pub e: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

pub const PROJECTION_MAGIC: &str = "vixen-projection";
pub const PROJECTION_VERSION: u32 = 1;

impl ProjectionCheckpoint {
    pub fn from_layer(layer: &ProjectionLayer) -> Self {
        ProjectionCheckpoint {
            magic: PROJECTION_MAGIC.into(),
            version: PROJECTION_VERSION,
            h: layer.input_dim(),
            e: layer.output_dim(),
            weight: layer.weight.iter().copied().collect(),
            bias: layer.bias.to_vec(),
        }
    }

    pub fn into_layer(self) -> Result<ProjectionLayer> {
        if self.magic != PROJECTION_MAGIC {
            return Err(Error::Checkpoint(format!("bad magic '{}'", self.magic)));
        }
        if self.version != PROJECTION_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        if self.weight.len() != self.e * self.h || self.bias.len() != self.e {
            return Err(Error::Checkpoint("weight/bias length mismatch".into()));
        }
        Ok(ProjectionLayer {
            weight: Array2::from_shape_vec((self.e, self.h), self.weight)
                .map_err(|e| Error::Checkpoint(e.to_string()))?,
            bias: Array1::from_vec(self.bias),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fm(data: Array2<f64>) -> FeatureMap {
        FeatureMap::new(data).unwrap()
    }

    #[test]
    fn project_zero_features_yields_bias_rows() {
        let layer = ProjectionLayer {
            weight: Array2::from_elem((2, 3), 0.7),
            bias: array![1.0, -2.0],
        };
        let out = project(&fm(Array2::zeros((4, 3))), &layer).unwrap();
        for row in out.rows() {
            assert_eq!(row.to_vec(), vec![1.0, -2.0]);
        }
    }

    #[test]
    fn project_hand_computed_case() {
        // 2x3 features, 2x3 weight, bias
        let layer = ProjectionLayer {
            weight: array![[1.0, 2.0, 3.0], [0.5, -1.0, 0.0]],
            bias: array![0.1, 0.2],
        };
        let f = fm(array![[1.0, 0.0, 2.0], [0.0, 1.0, 1.0]]);
        let out = project(&f, &layer).unwrap();
        // row0: [1*1+2*0+3*2+0.1, 0.5*1-1*0+0*2+0.2] = [7.1, 0.7]
        // row1: [0+2+3+0.1, 0-1+0+0.2] = [5.1, -0.8]
        assert!((out[[0, 0]] - 7.1).abs() < 1e-12);
        assert!((out[[0, 1]] - 0.7).abs() < 1e-12);
        assert!((out[[1, 0]] - 5.1).abs() < 1e-12);
        assert!((out[[1, 1]] - -0.8).abs() < 1e-12);
    }

    #[test]
    fn project_shape_contract() {
        let layer = ProjectionLayer::init(8, 16, 3);
        let out = project(&fm(Array2::zeros((5, 8))), &layer).unwrap();
        assert_eq!(out.dim(), (5, 16));
        assert!(project(&fm(Array2::zeros((5, 9))), &layer).is_err());
    }

    #[test]
    fn fuse_identities() {
        let p = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f64 * 0.3 - 1.0);
        let ones = Array2::ones((3, 4));

        let z = fuse(&p, &p, FusionStrategy::Subtraction).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));

        let m = fuse(&p, &p, FusionStrategy::Mean).unwrap();
        assert_eq!(m.data(), &p);

        let mul = fuse(&p, &ones, FusionStrategy::Multiplication).unwrap();
        assert_eq!(mul.data(), &p);

        let c = fuse(&p, &ones, FusionStrategy::Concatenation).unwrap();
        assert_eq!(c.len(), 6);
        assert_eq!(c.data().slice(ndarray::s![..3, ..]), p);
    }

    #[test]
    fn fuse_shape_mismatch_errors() {
        let p = Array2::zeros((3, 4));
        let q = Array2::zeros((2, 4));
        assert!(fuse(&p, &q, FusionStrategy::Addition).is_err());
    }

    #[test]
    fn commutativity_and_anticommutativity() {
        let p = Array2::from_shape_fn((2, 3), |(i, j)| (i + 2 * j) as f64);
        let q = Array2::from_shape_fn((2, 3), |(i, j)| (3 * i) as f64 - j as f64);
        for s in [FusionStrategy::Addition, FusionStrategy::Multiplication, FusionStrategy::Mean] {
            assert_eq!(fuse(&p, &q, s).unwrap(), fuse(&q, &p, s).unwrap());
        }
        let a = fuse(&p, &q, FusionStrategy::Subtraction).unwrap();
        let b = fuse(&q, &p, FusionStrategy::Subtraction).unwrap();
        assert_eq!(a.data(), &(-b.data()));
    }

    #[test]
    fn assemble_prompt_appends_prefix_rows() {
        let tok = ToyTokenizer::from_corpus(["alpha beta"]);
        let e = 4;
        let table = Array2::from_shape_fn((tok.vocab_size(), e), |(i, j)| (i + j) as f64 * 0.01);
        let s_v = SoftPrompt::new(Array2::ones((3, e))).unwrap();

        let empty = assemble_prompt(&s_v, "", &tok, table.view()).unwrap();
        assert_eq!(empty, s_v);

        // "alpha beta" -> [alpha][space byte][beta]
        let full = assemble_prompt(&s_v, "alpha beta", &tok, table.view()).unwrap();
        assert_eq!(full.len(), 3 + 3);
        let ids = tok.encode("alpha beta");
        for (row, &id) in ids.iter().enumerate() {
            assert_eq!(full.data().row(3 + row), table.row(id));
        }
    }

    #[test]
    fn projection_checkpoint_round_trip() {
        let layer = ProjectionLayer::init(5, 7, 11);
        let json = serde_json::to_string(&ProjectionCheckpoint::from_layer(&layer)).unwrap();
        let back: ProjectionCheckpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_layer().unwrap(), layer);
    }

    #[test]
    fn projection_checkpoint_bad_magic() {
        let layer = ProjectionLayer::init(2, 2, 1);
        let mut ck = ProjectionCheckpoint::from_layer(&layer);
        ck.magic = "garbage".into();
        assert!(ck.into_layer().is_err());
    }

    #[test]
    fn project_is_affine_with_zero_bias() {
        let layer = ProjectionLayer::init(4, 3, 9); // bias = 0
        let f = Array2::from_shape_fn((2, 4), |(i, j)| (i * 4 + j) as f64 * 0.1);
        let g = Array2::from_shape_fn((2, 4), |(i, j)| 1.0 - (i + j) as f64 * 0.2);
        let alpha = 0.25;
        let blend = fm(&f * alpha + &g * (1.0 - alpha));
        let lhs = project(&blend, &layer).unwrap();
        let rhs = project(&fm(f), &layer).unwrap() * alpha + project(&fm(g), &layer).unwrap() * (1.0 - alpha);
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
