use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pattern parameters derived from a target per-layer density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMapping {
    pub density: f64,
    pub n_in: usize,
    /// Number of diagonals for the diagonal family.
    pub k: usize,
    /// Block size for the block family.
    pub b: usize,
    /// Odd band width `2b + 1` for the banded family.
    pub band_width: usize,
    /// Tied N:M ratio, `alpha = n_keep / m_group = density`.
    pub alpha: f64,
    pub alpha_ratio: (u64, u64),
}

/// Maps a target density to the smallest integer parameters whose per-row
/// nonzero count is closest to `density * n_in`.
///
/// `K = B = round(density * n_in)` with halves rounded away from zero; the band
/// width is the nearest odd integer, ties going to the larger one.
pub fn map_density(density: f64, n_in: usize) -> Result<DensityMapping> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Domain(format!("density {density} outside (0, 1]")));
    }
    if n_in == 0 {
        return Err(Error::Domain("n_in must be at least 1".into()));
    }
    let target = density * n_in as f64;
    // f64::round is half-away-from-zero.
    let k = target.round() as usize;
    if k == 0 {
        return Err(Error::Domain(format!("density {density} too small for n_in={n_in}: zero nonzeros per row")));
    }
    let band_width = nearest_odd(target);
    let ratio = Ratio::<i64>::approximate_float(density)
        .ok_or_else(|| Error::Domain(format!("density {density} has no rational form")))?;
    Ok(DensityMapping {
        density,
        n_in,
        k,
        b: k,
        band_width,
        alpha: density,
        alpha_ratio: (*ratio.numer() as u64, *ratio.denom() as u64),
    })
}

fn nearest_odd(x: f64) -> usize {
    let below = 2.0 * ((x - 1.0) / 2.0).floor() + 1.0;
    let above = below + 2.0;
    let pick = if x - below < above - x { below } else { above };
    pick.max(1.0) as usize
}
