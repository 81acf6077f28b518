//! Run configurations: network construction plus dataset and training
//! settings, as consumed by the command-line tool.

use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DataSpec, Dataset};
use crate::dst::{train, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::netcore::{PALayer, PermSide, SmallNet};
use crate::patterns::{generate_mask, map_density, SparseLayer, StructurePattern};
use crate::permutation::SoftPermutation;
use crate::Scalar;

pub const CONFIG_VERSION: u32 = 1;

/// Sparsity family of every layer in a generated network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum StructureSpec {
    /// `K` wrapped diagonals at offsets `0..K`, `K` from the density mapping.
    Diagonal,
    Block {
        block_size: usize,
    },
    Nm {
        n_keep: usize,
        m_group: usize,
    },
    Unstructured,
    Dense,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PermMode {
    /// Soft permutation started near the uniform matrix.
    #[default]
    Learned,
    /// Fixed hardened identity.
    Identity,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightInit {
    /// Uniform in `[-a, a]`.
    #[default]
    Symmetric,
    /// Uniform in `[a / 2, 3a / 2]`.
    Positive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Input width followed by each layer's output width.
    pub widths: Vec<usize>,
    pub structure: StructureSpec,
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default)]
    pub perm: PermMode,
    /// Jitter added to the uniform matrix before projection.
    #[serde(default = "default_noise")]
    pub perm_noise: f64,
    #[serde(default = "default_true")]
    pub bias: bool,
    /// Initial bias of hidden layers. A positive value keeps every hidden
    /// unit active at the start when inputs and targets are nonnegative.
    #[serde(default)]
    pub hidden_bias: f64,
    #[serde(default)]
    pub init: WeightInit,
}

fn default_density() -> f64 {
    1.0
}

fn default_noise() -> f64 {
    0.01
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub model: ModelSpec,
    pub data: DataSpec,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Version(cfg.version));
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// Builds the network and dataset from `train.seed` and trains.
    pub fn run<T: Scalar>(&self, base: &Path) -> Result<(SmallNet<T>, TrainReport)> {
        let data: Dataset<T> = self.data.load(self.train.seed, base)?;
        let net = build_net(&self.model, self.train.perm_side, self.train.seed)?;
        train(net, &data, &self.train)
    }
}

/// Deterministic network construction. The weight scale is
/// `a = sqrt(3 / fan_in)` with `fan_in` the mean active count per row;
/// output biases start at zero.
pub fn build_net<T: Scalar>(spec: &ModelSpec, side: PermSide, seed: u64) -> Result<SmallNet<T>> {
    if spec.widths.len() < 2 || spec.widths.contains(&0) {
        return Err(Error::Config("model needs an input width and at least one positive layer width".into()));
    }
    if !(spec.density > 0.0 && spec.density <= 1.0) {
        return Err(Error::Config(format!("density {} outside (0, 1]", spec.density)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6f_6465_6c);
    let mut layers = Vec::with_capacity(spec.widths.len() - 1);
    for (i, w) in spec.widths.windows(2).enumerate() {
        let (cols, rows) = (w[0], w[1]);
        let pattern = layer_pattern(&spec.structure, spec.density, rows, cols, &mut rng)?;
        let mask = generate_mask(&pattern, rows, cols, seed.wrapping_add(i as u64))?;
        let fan_in = (mask.nnz() as f64 / rows as f64).max(1.0);
        let a = (3.0 / fan_in).sqrt();
        let weights = match spec.init {
            WeightInit::Symmetric => SparseLayer::random(mask, T::lit(a), &mut rng),
            WeightInit::Positive => {
                let values = (0..mask.nnz()).map(|_| T::lit(rng.gen_range(0.5 * a..1.5 * a))).collect();
                SparseLayer::new(mask, values)?
            }
        };
        let n = match side {
            PermSide::Column => cols,
            PermSide::Row => rows,
        };
        let perm = match spec.perm {
            PermMode::Learned => SoftPermutation::uniform_init(n, spec.perm_noise, &mut rng),
            PermMode::Identity => SoftPermutation::identity(n),
        };
        let b0 = if i + 2 < spec.widths.len() { spec.hidden_bias } else { 0.0 };
        let bias = spec.bias.then(|| vec![T::lit(b0); rows]);
        layers.push(PALayer::new(weights, perm, bias, side)?);
    }
    SmallNet::new(layers)
}

pub(crate) fn layer_pattern(
    s: &StructureSpec,
    density: f64,
    rows: usize,
    cols: usize,
    rng: &mut ChaCha8Rng,
) -> Result<StructurePattern> {
    Ok(match s {
        StructureSpec::Diagonal => {
            let k = map_density(density, cols)?.k.min(rows.max(cols));
            StructurePattern::diagonal((0..k as i64).collect::<Vec<_>>())
        }
        StructureSpec::Block { block_size } => {
            let b = *block_size;
            if b == 0 || !rows.is_multiple_of(b) || !cols.is_multiple_of(b) {
                return Err(Error::Config(format!("block size {b} does not tile {rows}x{cols}")));
            }
            let (br, bc) = (rows / b, cols / b);
            let count = ((density * (br * bc) as f64).round() as usize).clamp(1, br * bc);
            let mut active_blocks: Vec<(usize, usize)> =
                sample(rng, br * bc, count).into_iter().map(|k| (k / bc, k % bc)).collect();
            active_blocks.sort_unstable();
            StructurePattern::Block { block_size: b, active_blocks }
        }
        StructureSpec::Nm { n_keep, m_group } => StructurePattern::Nm { n_keep: *n_keep, m_group: *m_group },
        StructureSpec::Unstructured => {
            StructurePattern::Unstructured { nnz: ((density * (rows * cols) as f64).round() as usize).max(1) }
        }
        StructureSpec::Dense => StructurePattern::Unstructured { nnz: rows * cols },
    })
}
