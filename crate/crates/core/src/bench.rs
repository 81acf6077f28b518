//! Micro-benchmark of the three ways to run a hardened permuted layer.
//!
//! (a) the structured kernel alone, (b) an explicit permutation multiply
//! followed by the kernel, (c) the kernel with the index map folded into its
//! column indices. Timings are only reported once (b) and (c) agree bitwise.

use std::hint::black_box;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{layer_pattern, StructureSpec};
use crate::netcore::{InferenceNet, PALayer, PermSide, SmallNet};
use crate::patterns::{generate_mask, spmv, Mask, SparseLayer, StructurePattern};
use crate::permutation::{IndexMap, SoftPermutation};

pub const BENCH_REPORT_VERSION: u32 = 1;
pub const MIN_N: usize = 16;
pub const MIN_REPEATS: usize = 10;

/// Multiply-adds per timed repeat; the inner loop count is derived from it.
const WORK_PER_REPEAT: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n: usize,
    pub density: f64,
    pub structure: StructureSpec,
    pub repeats: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathTiming {
    pub median_ns: f64,
    pub samples_ns: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub version: u32,
    pub config: BenchConfig,
    pub nnz: usize,
    pub iters_per_repeat: usize,
    pub plain: PathTiming,
    pub explicit: PathTiming,
    pub reindexed: PathTiming,
    /// (b) / (a).
    pub ratio_explicit: f64,
    /// (c) / (a).
    pub ratio_reindexed: f64,
    pub bitwise_equal: bool,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path,median_ns,ratio_to_plain\n");
        out += &format!("plain,{:.1},1\n", self.plain.median_ns);
        out += &format!("explicit,{:.1},{:.4}\n", self.explicit.median_ns, self.ratio_explicit);
        out += &format!("reindexed,{:.1},{:.4}\n", self.reindexed.median_ns, self.ratio_reindexed);
        out
    }
}

/// The permutation as a CSR matrix with a single 1 per row, so `(P x)_i = x[l(i)]`.
fn permutation_csr(map: &IndexMap) -> Result<SparseLayer<f64>> {
    let n = map.len();
    let mask = Mask::from_positions(
        n,
        n,
        map.as_slice().iter().enumerate().map(|(i, &j)| (i, j)),
        StructurePattern::Unstructured { nnz: n },
    )?;
    SparseLayer::new(mask, vec![1.0; n])
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

/// Mean ns per call over `iters` back-to-back calls.
fn time_once(iters: usize, f: &mut impl FnMut() -> Vec<f64>) -> f64 {
    let start = Instant::now();
    for _ in 0..iters {
        black_box(f());
    }
    start.elapsed().as_nanos() as f64 / iters as f64
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Runs the benchmark on one random hardened `n x n` layer.
pub fn bench_reindex(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.n < MIN_N {
        return Err(Error::Config(format!("bench needs n >= {MIN_N}, got {}", cfg.n)));
    }
    if cfg.repeats < MIN_REPEATS {
        return Err(Error::Config(format!("bench needs repeats >= {MIN_REPEATS}, got {}", cfg.repeats)));
    }
    if !(cfg.density > 0.0 && cfg.density <= 1.0) {
        return Err(Error::Config(format!("density {} outside (0, 1]", cfg.density)));
    }
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pattern = layer_pattern(&cfg.structure, cfg.density, n, n, &mut rng)?;
    let mask = generate_mask(&pattern, n, n, cfg.seed)?;
    let weights = SparseLayer::random(mask, 1.0, &mut rng);
    let mut map: Vec<usize> = (0..n).collect();
    map.shuffle(&mut rng);
    let map = IndexMap::new(map)?;
    let x: Vec<f64> = (0..n).map(|i| ((i * 7919) % 1000) as f64 / 500.0 - 1.0).collect();

    let p = permutation_csr(&map)?;
    let layer = PALayer::new(weights.clone(), SoftPermutation::from_index_map(map), None, PermSide::Column)?;
    let compiled = InferenceNet::compile(&SmallNet::new(vec![layer])?)?;
    let reindexed_layer = &compiled.layers()[0];

    let mut plain = || spmv(&weights, black_box(&x)).expect("dims checked");
    let mut explicit = || spmv(&weights, &spmv(&p, black_box(&x)).expect("dims checked")).expect("dims checked");
    let mut reindexed = || reindexed_layer.apply(black_box(&x));

    if bits(&explicit()) != bits(&reindexed()) {
        return Err(Error::Domain("re-indexed and explicit outputs differ; refusing to report timings".into()));
    }

    let nnz = weights.mask().nnz();
    let iters = (WORK_PER_REPEAT / (nnz + n)).max(1);
    // Interleave paths per repeat so drift affects all three alike.
    let mut t = [Vec::new(), Vec::new(), Vec::new()];
    time_once(iters, &mut plain);
    for _ in 0..cfg.repeats {
        t[0].push(time_once(iters, &mut plain));
        t[1].push(time_once(iters, &mut explicit));
        t[2].push(time_once(iters, &mut reindexed));
    }
    let [a, b, c] = t.map(|samples_ns| PathTiming { median_ns: median(&mut samples_ns.clone()), samples_ns });
    Ok(BenchReport {
        version: BENCH_REPORT_VERSION,
        config: cfg.clone(),
        nnz,
        iters_per_repeat: iters,
        ratio_explicit: b.median_ns / a.median_ns,
        ratio_reindexed: c.median_ns / a.median_ns,
        plain: a,
        explicit: b,
        reindexed: c,
        bitwise_equal: true,
    })
}
