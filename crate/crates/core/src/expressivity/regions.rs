//! Exact activation-region counting for tiny ReLU networks.
//!
//! Sign patterns are grown one neuron at a time. Each partial pattern is a
//! polyhedron in input space, and a branch is kept only if that polyhedron
//! has interior inside the box `[-R, R]^d0`. Deeper layers see the affine
//! map that the already-fixed pattern induces on the input.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lp::max_margin;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Half-width of the input box.
pub const BOX_RADIUS: f64 = 10.0;

/// Regions whose inscribed-ball radius falls below this are still counted,
/// but flagged.
pub const DEGENERATE_MARGIN: f64 = 1e-9;

const MAX_INPUT_DIM: usize = 3;
const MAX_NEURONS: usize = 10;

/// `z = W x + b`, followed by ReLU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineLayer {
    pub weights: Matrix<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionCount {
    pub regions: usize,
    /// Counted regions that are thinner than [`DEGENERATE_MARGIN`] or rely on
    /// a neuron that is exactly zero on the whole region.
    pub degenerate: usize,
}

impl std::ops::Add for RegionCount {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self { regions: self.regions + o.regions, degenerate: self.degenerate + o.degenerate }
    }
}

type HalfSpace = (Vec<f64>, f64);

/// Input-space affine map of the current layer's input: rows `(a, c)` give `a·x + c`.
type AffineMap = Vec<HalfSpace>;

struct Walk<'a> {
    layers: &'a [AffineLayer],
    d0: usize,
}

/// Counts the nonempty activation regions of the network within `[-R, R]^d0`.
pub fn count_regions_exact(layers: &[AffineLayer]) -> Result<RegionCount> {
    let d0 = layers.first().map(|l| l.weights.cols()).ok_or_else(|| Error::Config("no layers".into()))?;
    if d0 == 0 || d0 > MAX_INPUT_DIM {
        return Err(Error::Domain(format!("region counting needs 1 <= d0 <= {MAX_INPUT_DIM}, got {d0}")));
    }
    let neurons: usize = layers.iter().map(|l| l.weights.rows()).sum();
    if neurons > MAX_NEURONS {
        return Err(Error::Domain(format!("region counting supports at most {MAX_NEURONS} neurons, got {neurons}")));
    }
    let mut fan_in = d0;
    for (i, l) in layers.iter().enumerate() {
        if l.weights.cols() != fan_in || l.bias.len() != l.weights.rows() {
            return Err(Error::Dimension(format!("layer {i} does not chain")));
        }
        if l.weights.as_slice().iter().chain(&l.bias).any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite parameter in layer {i}")));
        }
        fan_in = l.weights.rows();
    }
    let identity: AffineMap = (0..d0)
        .map(|i| {
            let mut a = vec![0.0; d0];
            a[i] = 1.0;
            (a, 0.0)
        })
        .collect();
    let walk = Walk { layers, d0 };
    Ok(walk.explore(0, 0, &identity, Vec::new(), Vec::new(), false))
}

impl Walk<'_> {
    fn explore(
        &self,
        layer: usize,
        neuron: usize,
        input: &AffineMap,
        output: AffineMap,
        constraints: Vec<HalfSpace>,
        flagged: bool,
    ) -> RegionCount {
        let Some(current) = self.layers.get(layer) else {
            return RegionCount { regions: 1, degenerate: usize::from(flagged) };
        };
        if neuron == current.weights.rows() {
            return self.explore(layer + 1, 0, &output, Vec::new(), constraints, flagged);
        }

        let w = current.weights.row(neuron);
        let mut a = vec![0.0; self.d0];
        let mut beta = current.bias[neuron];
        for (&wj, (row, c)) in w.iter().zip(input) {
            a.iter_mut().zip(row).for_each(|(ai, &r)| *ai += wj * r);
            beta += wj * c;
        }
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();

        let branch = |active: bool| -> RegionCount {
            let mut cons = constraints.clone();
            let mut flag = flagged;
            if norm <= 1e-12 {
                // Constant on the region: the sign is decided by the offset alone.
                if beta == 0.0 {
                    if active {
                        return RegionCount::default();
                    }
                    flag = true;
                } else if (beta > 0.0) != active {
                    return RegionCount::default();
                }
            } else {
                let s = if active { 1.0 } else { -1.0 };
                cons.push((a.iter().map(|v| s * v / norm).collect(), s * beta / norm));
                let margin = max_margin(&cons, self.d0, BOX_RADIUS, 1.0);
                if margin < -DEGENERATE_MARGIN {
                    return RegionCount::default();
                }
                flag |= margin <= DEGENERATE_MARGIN;
            }
            let mut out = output.clone();
            out.push(if active { (a.clone(), beta) } else { (vec![0.0; self.d0], 0.0) });
            self.explore(layer, neuron + 1, input, out, cons, flag)
        };
        let (on, off) = rayon::join(|| branch(true), || branch(false));
        on + off
    }
}

/// A single layer whose hyperplanes are in general position inside the box.
///
/// Entries are uniform in `[-1, 1]`. A draw is rejected unless every
/// intersection of up to `d0` hyperplanes is well conditioned and passes
/// within `R / 2` of the origin. Then every flat of the arrangement meets the
/// box and the region count inside the box equals the count in all of space.
pub fn sample_generic_layer(d0: usize, n: usize, rng: &mut impl Rng) -> AffineLayer {
    loop {
        let weights = Matrix::from_fn(n, d0, |_, _| rng.gen_range(-1.0..1.0));
        let bias: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let layer = AffineLayer { weights, bias };
        if flats_meet_box(&layer) {
            return layer;
        }
    }
}

fn flats_meet_box(layer: &AffineLayer) -> bool {
    let (n, d) = (layer.weights.rows(), layer.weights.cols());
    let mut subset = Vec::new();
    fn rec(layer: &AffineLayer, start: usize, n: usize, d: usize, subset: &mut Vec<usize>) -> bool {
        if !subset.is_empty() && !flat_ok(layer, subset) {
            return false;
        }
        if subset.len() == d {
            return true;
        }
        for i in start..n {
            subset.push(i);
            let ok = rec(layer, i + 1, n, d, subset);
            subset.pop();
            if !ok {
                return false;
            }
        }
        true
    }
    rec(layer, 0, n, d, &mut subset)
}

/// Minimum-norm point of `{x : w_i·x + b_i = 0, i in subset}` via the Gram system.
fn flat_ok(layer: &AffineLayer, subset: &[usize]) -> bool {
    let k = subset.len();
    let rows: Vec<&[f64]> = subset.iter().map(|&i| layer.weights.row(i)).collect();
    let mut g: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut r: Vec<f64> = (0..k).map(|j| dot(rows[i], rows[j])).collect();
            r.push(-layer.bias[subset[i]]);
            r
        })
        .collect();
    let scale: f64 = rows.iter().map(|r| dot(r, r)).product();
    let mut det = 1.0;
    for c in 0..k {
        let p = (c..k).max_by(|&a, &b| g[a][c].abs().total_cmp(&g[b][c].abs())).expect("nonempty");
        g.swap(c, p);
        det *= g[c][c];
        if g[c][c].abs() < 1e-12 {
            return false;
        }
        for r in c + 1..k {
            let f = g[r][c] / g[c][c];
            for j in c..=k {
                g[r][j] -= f * g[c][j];
            }
        }
    }
    if det.abs() < 1e-2 * scale {
        return false;
    }
    let mut y = vec![0.0; k];
    for r in (0..k).rev() {
        let s: f64 = (r + 1..k).map(|j| g[r][j] * y[j]).sum();
        y[r] = (g[r][k] - s) / g[r][r];
    }
    let d = layer.weights.cols();
    let x: Vec<f64> = (0..d).map(|j| rows.iter().zip(&y).map(|(r, yi)| r[j] * yi).sum()).collect();
    dot(&x, &x).sqrt() < BOX_RADIUS / 2.0
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
