//! Linear-region lower bounds for (structured) ReLU MLPs.
//!
//! Every bound has the form `prod_l sum_{j<=k_l} C(n_l, j)`, where the
//! effective dimension `k_l` is capped by a span budget `u_l` that tracks how
//! many input directions the network has been able to reach so far.
//! Full-span families (dense, unstructured, free N:M) see all `d0` directions
//! immediately. Axis-structured families see only `r_struct` coordinates per
//! layer. Without a mixer they stay stuck there, and with a per-layer
//! permutation the budget grows additively.

mod lp;
mod regions;
mod report;

use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use regions::{count_regions_exact, sample_generic_layer, AffineLayer, RegionCount, BOX_RADIUS, DEGENERATE_MARGIN};
pub use report::{log10_big, BoundReport, LayerBound, BOUND_REPORT_VERSION};

pub const NETWORK_SPEC_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    Dense,
    Unstructured,
    /// `k` diagonals.
    Diag {
        k: usize,
    },
    /// Half-bandwidth `b`, so `2b + 1` nonzeros per row.
    Banded {
        b: usize,
    },
    /// Square blocks of side `b`.
    Block {
        b: usize,
    },
    /// N:M with independent supports per row, `alpha = n / m`.
    NmFree {
        n: usize,
        m: usize,
    },
    /// N:M with one support template shared by all rows.
    NmTied {
        n: usize,
        m: usize,
    },
}

impl Family {
    /// Families whose rows can reach every input coordinate.
    pub fn is_full_span(&self) -> bool {
        matches!(self, Family::Dense | Family::Unstructured | Family::NmFree { .. })
    }

    pub fn label(&self) -> String {
        match *self {
            Family::Dense => "dense".into(),
            Family::Unstructured => "unstructured".into(),
            Family::Diag { k } => format!("diag({k})"),
            Family::Banded { b } => format!("banded({b})"),
            Family::Block { b } => format!("block({b})"),
            Family::NmFree { n, m } => format!("nm_free({n}:{m})"),
            Family::NmTied { n, m } => format!("nm_tied({n}:{m})"),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Family::Diag { k } => k >= 1,
            Family::Block { b } => b >= 1,
            Family::NmFree { n, m } | Family::NmTied { n, m } => n >= 1 && n <= m,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid family parameters {}", self.label())))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub family: Family,
    #[serde(default)]
    pub mixing: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default = "spec_version")]
    pub version: u32,
    pub d0: usize,
    pub widths: Vec<usize>,
    /// One entry per width.
    pub layers: Vec<LayerSpec>,
    /// Groups layers into blocks when reporting the depth overhead.
    #[serde(default = "one")]
    pub layers_per_block: usize,
}

fn spec_version() -> u32 {
    NETWORK_SPEC_VERSION
}

fn one() -> usize {
    1
}

impl NetworkSpec {
    /// Same family and mixing flag at every layer.
    pub fn uniform(d0: usize, widths: Vec<usize>, family: Family, mixing: bool) -> Self {
        let layers = vec![LayerSpec { family, mixing }; widths.len()];
        Self { version: NETWORK_SPEC_VERSION, d0, widths, layers, layers_per_block: 1 }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != NETWORK_SPEC_VERSION {
            return Err(Error::Version(self.version));
        }
        if self.d0 == 0 || self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config("d0 and every width must be at least 1, with at least one layer".into()));
        }
        if self.layers.len() != self.widths.len() {
            return Err(Error::Config(format!("{} layer specs for {} widths", self.layers.len(), self.widths.len())));
        }
        if self.layers_per_block == 0 {
            return Err(Error::Config("layers_per_block must be at least 1".into()));
        }
        self.layers.iter().try_for_each(|l| l.family.validate())
    }

    /// Input width of layer `l` (0-based).
    pub fn n_in(&self, l: usize) -> usize {
        if l == 0 {
            self.d0
        } else {
            self.widths[l - 1]
        }
    }

    fn has_mixing(&self) -> bool {
        self.layers.iter().any(|l| l.mixing && !l.family.is_full_span())
    }
}

/// Structural direction cap of one layer, and whether it had to be clamped to `n_in`.
pub fn r_struct(family: &Family, n_in: usize) -> (usize, bool) {
    let raw = match *family {
        Family::Dense | Family::Unstructured | Family::NmFree { .. } => n_in,
        Family::Diag { k } => k,
        Family::Banded { b } => 2 * b + 1,
        Family::Block { b } => b,
        Family::NmTied { n, m } => n * n_in / m,
    };
    (raw.min(n_in), raw > n_in)
}

/// One step of the span recursion.
struct SpanStep {
    r: usize,
    clamped: bool,
    g: usize,
    u: usize,
    /// Effective dimension the layer's `k` is capped by.
    h: usize,
}

fn span_step(spec: &NetworkSpec, l: usize, u_prev: usize) -> SpanStep {
    let layer = &spec.layers[l];
    let (r, clamped) = r_struct(&layer.family, spec.n_in(l));
    let d0 = spec.d0;
    let (u, h) = if layer.family.is_full_span() {
        (d0, d0)
    } else if layer.mixing {
        let u = d0.min(u_prev + r.min(d0 - u_prev.min(d0)));
        (u, u)
    } else if let Family::NmTied { n, m } = layer.family {
        // The shared template keeps a fraction alpha of the reachable directions.
        (u_prev, n * u_prev / m)
    } else {
        // Stalled: the same coordinate subspace at every depth.
        let u = d0.min(r);
        (u, u)
    };
    SpanStep { r, clamped, g: u.saturating_sub(u_prev), u, h }
}

/// `u_0`: 0 once a mixer is present. Otherwise `d0`, except that an unmixed
/// axis-structured first layer starts at its own frozen budget.
fn initial_budget(spec: &NetworkSpec) -> usize {
    let first = &spec.layers[0].family;
    if spec.has_mixing() {
        0
    } else if first.is_full_span() || matches!(first, Family::NmTied { .. }) {
        spec.d0
    } else {
        spec.d0.min(r_struct(first, spec.d0).0)
    }
}

/// `u_0, ..., u_L`.
pub fn span_budget(spec: &NetworkSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let mut u = vec![initial_budget(spec)];
    for l in 0..spec.widths.len() {
        let next = span_step(spec, l, u[l]).u;
        u.push(next);
    }
    Ok(u)
}

/// `sum_{j=0}^{k} C(n, j)`.
pub fn binom_sum(n: u64, k: u64) -> Result<BigUint> {
    if k > n {
        return Err(Error::Domain(format!("binom_sum needs k <= n, got n={n}, k={k}")));
    }
    let mut term = BigUint::one();
    let mut sum = BigUint::one();
    for j in 1..=k {
        term = term * (n - j + 1) / j;
        sum += &term;
    }
    Ok(sum)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DepthOverhead {
    /// `u` first equals `d0` after this many layers.
    Reached {
        layers: usize,
    },
    Stalled,
}

impl DepthOverhead {
    /// The overhead counted in blocks of `per_block` layers.
    pub fn blocks(&self, per_block: usize) -> Option<usize> {
        match *self {
            DepthOverhead::Reached { layers } => Some(layers.div_ceil(per_block)),
            DepthOverhead::Stalled => None,
        }
    }
}

/// Smallest depth after which the span budget reaches `d0`.
///
/// A spec shorter than its warm-up is extended by repeating its layers
/// cyclically, which is what "after `t` blocks" means for a repeated block.
/// Any unmixed axis-structured layer stalls the budget.
pub fn depth_overhead(spec: &NetworkSpec) -> Result<DepthOverhead> {
    spec.validate()?;
    if spec.layers.iter().any(|l| !l.mixing && !l.family.is_full_span()) {
        return Ok(DepthOverhead::Stalled);
    }
    let mut u = initial_budget(spec);
    if u == spec.d0 {
        return Ok(DepthOverhead::Reached { layers: 0 });
    }
    let len = spec.widths.len();
    for step in 0..len * (spec.d0 + 1) {
        let prev = u;
        u = span_step(spec, step % len, u).u;
        if u == spec.d0 {
            return Ok(DepthOverhead::Reached { layers: step + 1 });
        }
        if step % len == len - 1 && u == prev {
            break;
        }
    }
    Ok(DepthOverhead::Stalled)
}

/// Evaluates the bound layer by layer with exact integers.
pub fn nlr_lower_bound(spec: &NetworkSpec) -> Result<BoundReport> {
    spec.validate()?;
    let mut layers = Vec::with_capacity(spec.widths.len());
    let mut warnings = Vec::new();
    let mut total = BigUint::one();
    let mut u = initial_budget(spec);
    for (l, (&n, layer)) in spec.widths.iter().zip(&spec.layers).enumerate() {
        let s = span_step(spec, l, u);
        if s.clamped {
            warnings.push(format!("layer {}: {} exceeds n_in={}, clamped", l + 1, layer.family.label(), spec.n_in(l)));
        }
        let k = n.min(s.h);
        let factor = binom_sum(n as u64, k as u64)?;
        total *= &factor;
        layers.push(LayerBound {
            layer: l + 1,
            family: layer.family.label(),
            mixing: layer.mixing,
            n_in: spec.n_in(l),
            width: n,
            r_struct: s.r,
            clamped: s.clamped,
            g: s.g,
            u: s.u,
            k,
            factor,
        });
        u = s.u;
    }
    let overhead = depth_overhead(spec)?;
    Ok(BoundReport {
        version: BOUND_REPORT_VERSION,
        d0: spec.d0,
        h_rule: if spec.has_mixing() { "h=u_l" } else { "h=u_{l-1}" }.into(),
        layers,
        total,
        l_overhead: overhead.blocks(spec.layers_per_block),
        l_overhead_layers: overhead.blocks(1),
        overhead_stalled: overhead == DepthOverhead::Stalled,
        warnings,
    })
}

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &["appC", "vitL-surrogate"];

/// Built-in worked examples.
///
/// `appC`: `d0 = 4`, three layers of width 8, variants `dense` (default),
/// `block2`, `block2-perm`.
/// `vitL-surrogate`: `d0 = 1024`, 24 blocks of `1024 -> 4096 -> 1024` at
/// density 0.05 with diagonal layers, variants `perm` (default) and `no-perm`.
pub fn preset(name: &str, variant: Option<&str>) -> Result<NetworkSpec> {
    match (name, variant) {
        ("appC", None | Some("dense")) => Ok(NetworkSpec::uniform(4, vec![8; 3], Family::Dense, false)),
        ("appC", Some("block2")) => Ok(NetworkSpec::uniform(4, vec![8; 3], Family::Block { b: 2 }, false)),
        ("appC", Some("block2-perm")) => Ok(NetworkSpec::uniform(4, vec![8; 3], Family::Block { b: 2 }, true)),
        ("vitL-surrogate", None | Some("perm")) => vit_surrogate(true),
        ("vitL-surrogate", Some("no-perm")) => vit_surrogate(false),
        (n, Some(v)) if PRESETS.contains(&n) => Err(Error::Config(format!("unknown variant '{v}' for preset {n}"))),
        (n, _) => Err(Error::Config(format!("unknown preset '{n}', expected one of {PRESETS:?}"))),
    }
}

fn vit_surrogate(mixing: bool) -> Result<NetworkSpec> {
    let (d_model, d_ff, blocks) = (1024, 4096, 24);
    let k_up = crate::patterns::map_density(0.05, d_model)?.k;
    let k_down = crate::patterns::map_density(0.05, d_ff)?.k;
    let mut widths = Vec::new();
    let mut layers = Vec::new();
    for _ in 0..blocks {
        widths.extend([d_ff, d_model]);
        layers.push(LayerSpec { family: Family::Diag { k: k_up }, mixing });
        layers.push(LayerSpec { family: Family::Diag { k: k_down }, mixing });
    }
    Ok(NetworkSpec { version: NETWORK_SPEC_VERSION, d0: d_model, widths, layers, layers_per_block: 2 })
}
