use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An axis-aligned sparsity family together with its current parameters.
///
/// For the diagonal and block families the descriptor fully determines the
/// support. N:M and unstructured supports are free and live in the [`Mask`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StructurePattern {
    /// Offset `o` activates row `r` at column `r + o`. With `wrap` the diagonal
    /// runs along the shorter dimension and wraps around the longer one, so each
    /// diagonal carries exactly `min(rows, cols)` entries.
    Diagonal {
        offsets: Vec<i64>,
        #[serde(default = "default_wrap")]
        wrap: bool,
    },
    /// Square tiles of side `block_size`, addressed by `(block_row, block_col)`.
    Block {
        block_size: usize,
        active_blocks: Vec<(usize, usize)>,
    },
    /// Exactly `n_keep` nonzeros in every contiguous group of `m_group` columns of a row.
    Nm {
        n_keep: usize,
        m_group: usize,
    },
    Unstructured {
        nnz: usize,
    },
}

fn default_wrap() -> bool {
    true
}

impl StructurePattern {
    pub fn diagonal(offsets: impl Into<Vec<i64>>) -> Self {
        Self::Diagonal { offsets: offsets.into(), wrap: true }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Diagonal { .. } => "diagonal",
            Self::Block { .. } => "block",
            Self::Nm { .. } => "nm",
            Self::Unstructured { .. } => "unstructured",
        }
    }

    /// Checks that the parameters are admissible for an `rows x cols` matrix.
    pub fn check_dims(&self, rows: usize, cols: usize) -> Result<()> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!("empty matrix {rows}x{cols}")));
        }
        match self {
            Self::Diagonal { offsets, wrap } => {
                let mut seen = BTreeSet::new();
                for &o in offsets {
                    let in_range = if *wrap {
                        o.unsigned_abs() < rows.max(cols) as u64
                    } else {
                        o > -(rows as i64) && o < cols as i64
                    };
                    if !in_range {
                        return Err(Error::Structure(format!("diagonal offset {o} out of range for {rows}x{cols}")));
                    }
                    let key = if *wrap { canonical_offset(o, rows, cols) as i64 } else { o };
                    if !seen.insert(key) {
                        return Err(Error::Structure(format!("duplicate diagonal offset {o}")));
                    }
                }
                Ok(())
            }
            Self::Block { block_size, active_blocks } => {
                let b = *block_size;
                if b == 0 || !rows.is_multiple_of(b) || !cols.is_multiple_of(b) {
                    return Err(Error::Structure(format!("block size {b} does not divide {rows}x{cols}")));
                }
                let mut seen = BTreeSet::new();
                for &(br, bc) in active_blocks {
                    if br >= rows / b || bc >= cols / b {
                        return Err(Error::Structure(format!("block ({br},{bc}) out of range")));
                    }
                    if !seen.insert((br, bc)) {
                        return Err(Error::Structure(format!("duplicate block ({br},{bc})")));
                    }
                }
                Ok(())
            }
            Self::Nm { n_keep, m_group } => {
                if *n_keep == 0 || n_keep > m_group {
                    return Err(Error::Structure(format!("need 1 <= n <= m, got {n_keep}:{m_group}")));
                }
                if !cols.is_multiple_of(*m_group) {
                    return Err(Error::Structure(format!("group size {m_group} does not divide {cols} columns")));
                }
                Ok(())
            }
            Self::Unstructured { nnz } => {
                if *nnz > rows * cols {
                    return Err(Error::Structure(format!("nnz {nnz} exceeds {rows}x{cols}")));
                }
                Ok(())
            }
        }
    }

    /// Number of active entries this descriptor implies for an `rows x cols` matrix.
    pub fn nominal_count(&self, rows: usize, cols: usize) -> usize {
        match self {
            Self::Diagonal { offsets, wrap: true } => offsets.len() * rows.min(cols),
            Self::Diagonal { offsets, wrap: false } => {
                offsets.iter().map(|&o| diagonal_positions(o, false, rows, cols).len()).sum()
            }
            Self::Block { block_size, active_blocks } => active_blocks.len() * block_size * block_size,
            Self::Nm { n_keep, m_group } => rows * (cols / m_group) * n_keep,
            Self::Unstructured { nnz } => *nnz,
        }
    }

    /// Descriptor of the transposed support, if the family is closed under
    /// transposition. N:M row groups become column groups, which is not a
    /// member of the family.
    pub fn transposed(&self) -> Option<Self> {
        match self {
            Self::Diagonal { offsets, wrap } => {
                Some(Self::Diagonal { offsets: offsets.iter().map(|o| -o).collect(), wrap: *wrap })
            }
            Self::Block { block_size, active_blocks } => Some(Self::Block {
                block_size: *block_size,
                active_blocks: active_blocks.iter().map(|&(r, c)| (c, r)).collect(),
            }),
            Self::Nm { .. } => None,
            Self::Unstructured { nnz } => Some(Self::Unstructured { nnz: *nnz }),
        }
    }

    /// Whether the descriptor alone determines the support.
    pub fn determines_support(&self) -> bool {
        matches!(self, Self::Diagonal { .. } | Self::Block { .. })
    }
}

/// Offset reduced modulo the longer dimension.
pub(crate) fn canonical_offset(o: i64, rows: usize, cols: usize) -> usize {
    o.rem_euclid(rows.max(cols) as i64) as usize
}

/// Positions covered by one diagonal.
pub(crate) fn diagonal_positions(o: i64, wrap: bool, rows: usize, cols: usize) -> Vec<(usize, usize)> {
    if wrap {
        if rows <= cols {
            let c = cols as i64;
            (0..rows).map(|r| (r, (r as i64 + o).rem_euclid(c) as usize)).collect()
        } else {
            let r = rows as i64;
            (0..cols).map(|c| ((c as i64 - o).rem_euclid(r) as usize, c)).collect()
        }
    } else {
        (0..rows)
            .filter_map(|r| {
                let c = r as i64 + o;
                (c >= 0 && c < cols as i64).then_some((r, c as usize))
            })
            .collect()
    }
}

pub(crate) fn block_positions(br: usize, bc: usize, b: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..b).flat_map(move |i| (0..b).map(move |j| (br * b + i, bc * b + j)))
}

/// Active positions of a sparse matrix, stored row-major with ascending columns
/// within each row, plus the structure descriptor they are meant to follow.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    descriptor: StructurePattern,
}

impl Mask {
    /// Builds a mask from arbitrary positions. Positions must be in range and
    /// distinct; conformance to the descriptor is checked by [`validate_mask`].
    pub fn from_positions(
        rows: usize,
        cols: usize,
        positions: impl IntoIterator<Item = (usize, usize)>,
        descriptor: StructurePattern,
    ) -> Result<Self> {
        let set: BTreeSet<(usize, usize)> = positions.into_iter().collect();
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx = Vec::with_capacity(set.len());
        for &(r, c) in &set {
            if r >= rows || c >= cols {
                return Err(Error::Dimension(format!("position ({r},{c}) outside {rows}x{cols}")));
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self { rows, cols, row_ptr, col_idx, descriptor })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn descriptor(&self) -> &StructurePattern {
        &self.descriptor
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    /// Column indices of row `r`, ascending.
    pub fn row_cols(&self, r: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    /// Active positions in storage order.
    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows).flat_map(move |r| self.row_cols(r).iter().map(move |&c| (r, c)))
    }

    /// Storage slot of `(r, c)`, if active.
    pub fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let row = self.row_cols(r);
        row.binary_search(&c).ok().map(|i| self.row_ptr[r] + i)
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        r < self.rows && self.slot(r, c).is_some()
    }

    /// Same support plus one extra position, without any conformance check.
    pub fn with_position(&self, r: usize, c: usize) -> Result<Self> {
        Self::from_positions(
            self.rows,
            self.cols,
            self.positions().chain(std::iter::once((r, c))),
            self.descriptor.clone(),
        )
    }

    /// Transposed support. N:M masks keep only support-level information and
    /// are described as unstructured after transposition.
    pub fn transposed(&self) -> Self {
        let descriptor = self.descriptor.transposed().unwrap_or(StructurePattern::Unstructured { nnz: self.nnz() });
        Self::from_positions(self.cols, self.rows, self.positions().map(|(r, c)| (c, r)), descriptor)
            .expect("transposed positions stay in range")
    }
}

/// Materializes a mask for `pattern`. Diagonal and block supports follow the
/// descriptor; N:M picks `n_keep` positions per row group and unstructured picks
/// `nnz` positions, uniformly at random from `seed`.
pub fn generate_mask(pattern: &StructurePattern, rows: usize, cols: usize, seed: u64) -> Result<Mask> {
    pattern.check_dims(rows, cols)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<(usize, usize)> = match pattern {
        StructurePattern::Diagonal { offsets, wrap } => {
            offsets.iter().flat_map(|&o| diagonal_positions(o, *wrap, rows, cols)).collect()
        }
        StructurePattern::Block { block_size, active_blocks } => {
            active_blocks.iter().flat_map(|&(br, bc)| block_positions(br, bc, *block_size)).collect()
        }
        StructurePattern::Nm { n_keep, m_group } => {
            let mut out = Vec::with_capacity(pattern.nominal_count(rows, cols));
            for r in 0..rows {
                for g in 0..cols / m_group {
                    for i in sample(&mut rng, *m_group, *n_keep) {
                        out.push((r, g * m_group + i));
                    }
                }
            }
            out
        }
        StructurePattern::Unstructured { nnz } => {
            sample(&mut rng, rows * cols, *nnz).into_iter().map(|flat| (flat / cols, flat % cols)).collect()
        }
    };
    Mask::from_positions(rows, cols, positions, pattern.clone())
}

/// True iff every active position conforms to the descriptor and the active
/// count matches the count the descriptor implies.
pub fn validate_mask(mask: &Mask) -> bool {
    let (rows, cols) = (mask.rows, mask.cols);
    if mask.row_ptr.len() != rows + 1 || mask.row_ptr[rows] != mask.col_idx.len() {
        return false;
    }
    for r in 0..rows {
        let row = mask.row_cols(r);
        if row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&c| c >= cols) {
            return false;
        }
    }
    let pattern = mask.descriptor();
    if pattern.check_dims(rows, cols).is_err() || mask.nnz() != pattern.nominal_count(rows, cols) {
        return false;
    }
    match pattern {
        StructurePattern::Diagonal { .. } | StructurePattern::Block { .. } => {
            match generate_mask(pattern, rows, cols, 0) {
                Ok(expected) => expected.col_idx == mask.col_idx && expected.row_ptr == mask.row_ptr,
                Err(_) => false,
            }
        }
        StructurePattern::Nm { n_keep, m_group } => (0..rows).all(|r| {
            let mut counts = vec![0usize; cols / m_group];
            for &c in mask.row_cols(r) {
                counts[c / m_group] += 1;
            }
            counts.iter().all(|&k| k == *n_keep)
        }),
        StructurePattern::Unstructured { .. } => true,
    }
}
