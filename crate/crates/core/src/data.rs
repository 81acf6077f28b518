//! Regression datasets: the built-in synthetic generators and a CSV loader.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::permutation::IndexMap;
use crate::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    inputs: Vec<Vec<T>>,
    targets: Vec<Vec<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Vec<Vec<T>>, targets: Vec<Vec<T>>) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::Config(format!("{} inputs and {} targets", inputs.len(), targets.len())));
        }
        let (di, dt) = (inputs[0].len(), targets[0].len());
        if di == 0 || dt == 0 {
            return Err(Error::Config("samples must have at least one input and one target".into()));
        }
        if inputs.iter().any(|x| x.len() != di) || targets.iter().any(|y| y.len() != dt) {
            return Err(Error::Config("ragged samples".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn target_dim(&self) -> usize {
        self.targets[0].len()
    }

    pub fn inputs(&self) -> &[Vec<T>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vec<T>] {
        &self.targets
    }
}

/// Hidden structure behind a permuted-diagonal task: `y = D (P x)` with
/// `(P x)_i = x[perm(i)]` and `D` supported on wrapped diagonals `0..band`.
#[derive(Clone, Debug, PartialEq)]
pub struct PermutedDiagTruth {
    pub perm: IndexMap,
    /// Row-major `dim x dim` band matrix.
    pub band_matrix: Vec<f64>,
}

/// Inputs uniform in `[0, 1]`, band weights uniform in `[0.5, 1.5]`, so every
/// target is nonnegative and survives a ReLU. `noise` is the standard
/// deviation of additive uniform target noise.
pub fn permuted_diag<T: Scalar>(
    dim: usize,
    band: usize,
    samples: usize,
    noise: f64,
    seed: u64,
) -> Result<(Dataset<T>, PermutedDiagTruth)> {
    if dim == 0 || band == 0 || band > dim || samples == 0 {
        return Err(Error::Config(format!(
            "permuted-diag needs 1 <= band <= dim and samples > 0 (dim {dim}, band {band})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..dim).collect();
    perm.shuffle(&mut rng);
    let perm = IndexMap::new(perm).expect("shuffle is a bijection");
    let mut d = vec![0.0; dim * dim];
    for r in 0..dim {
        for o in 0..band {
            d[r * dim + (r + o) % dim] = rng.gen_range(0.5..1.5);
        }
    }
    let half_width = noise * 3f64.sqrt();
    let mut inputs = Vec::with_capacity(samples);
    let mut targets = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect();
        let px = perm.apply(&x);
        let y: Vec<f64> = (0..dim)
            .map(|r| {
                let clean: f64 = (0..dim).map(|c| d[r * dim + c] * px[c]).sum();
                if noise > 0.0 {
                    clean + rng.gen_range(-half_width..half_width)
                } else {
                    clean
                }
            })
            .collect();
        inputs.push(x.into_iter().map(T::lit).collect());
        targets.push(y.into_iter().map(T::lit).collect());
    }
    Ok((Dataset::new(inputs, targets)?, PermutedDiagTruth { perm, band_matrix: d }))
}

/// Targets from a random dense ReLU teacher with layer widths `dims`
/// (input first), inputs uniform in `[-1, 1]`.
pub fn dense_teacher<T: Scalar>(dims: &[usize], samples: usize, noise: f64, seed: u64) -> Result<Dataset<T>> {
    if dims.len() < 2 || dims.contains(&0) || samples == 0 {
        return Err(Error::Config("dense-teacher needs at least two positive widths and samples > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers: Vec<(Vec<f64>, Vec<f64>)> = dims
        .windows(2)
        .map(|w| {
            let s = (3.0 / w[0] as f64).sqrt();
            let weights = (0..w[0] * w[1]).map(|_| rng.gen_range(-s..s)).collect();
            let bias = (0..w[1]).map(|_| rng.gen_range(-0.1..0.1)).collect();
            (weights, bias)
        })
        .collect();
    let half_width = noise * 3f64.sqrt();
    let mut inputs = Vec::with_capacity(samples);
    let mut targets = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x: Vec<f64> = (0..dims[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut h = x.clone();
        for (l, (w, b)) in layers.iter().enumerate() {
            let n_in = h.len();
            let mut z: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(r, &b)| b + (0..n_in).map(|c| w[r * n_in + c] * h[c]).sum::<f64>())
                .collect();
            if l + 1 < layers.len() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            h = z;
        }
        if noise > 0.0 {
            h.iter_mut().for_each(|v| *v += rng.gen_range(-half_width..half_width));
        }
        inputs.push(x.into_iter().map(T::lit).collect());
        targets.push(h.into_iter().map(T::lit).collect());
    }
    Dataset::new(inputs, targets)
}

/// Parses comma-separated rows after a header line; the first `input_dim`
/// columns are inputs and the rest targets.
pub fn from_csv<T: Scalar>(text: &str, input_dim: usize) -> Result<Dataset<T>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Config("empty CSV".into()))?;
    let width = header.split(',').count();
    if input_dim == 0 || input_dim >= width {
        return Err(Error::Config(format!("input_dim {input_dim} leaves no targets among {width} columns")));
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("CSV row {}: {e}", i + 2)))?;
        if row.len() != width {
            return Err(Error::Config(format!("CSV row {} has {} fields, header has {width}", i + 2, row.len())));
        }
        inputs.push(row[..input_dim].iter().map(|&v| T::lit(v)).collect());
        targets.push(row[input_dim..].iter().map(|&v| T::lit(v)).collect());
    }
    Dataset::new(inputs, targets)
}

/// Dataset source as written in a run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    PermutedDiag {
        dim: usize,
        band: usize,
        samples: usize,
        #[serde(default)]
        noise: f64,
    },
    DenseTeacher {
        dims: Vec<usize>,
        samples: usize,
        #[serde(default)]
        noise: f64,
    },
    Csv {
        path: String,
        input_dim: usize,
    },
}

impl DataSpec {
    /// Materializes the dataset. Relative CSV paths resolve against `base`.
    pub fn load<T: Scalar>(&self, seed: u64, base: &Path) -> Result<Dataset<T>> {
        match self {
            Self::PermutedDiag { dim, band, samples, noise } => {
                Ok(permuted_diag(*dim, *band, *samples, *noise, seed)?.0)
            }
            Self::DenseTeacher { dims, samples, noise } => dense_teacher(dims, *samples, *noise, seed),
            Self::Csv { path, input_dim } => {
                let text = std::fs::read_to_string(base.join(path))
                    .map_err(|e| Error::Config(format!("cannot read {path}: {e}")))?;
                from_csv(&text, *input_dim)
            }
        }
    }
}
