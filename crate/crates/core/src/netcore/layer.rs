use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patterns::{spmv, spmv_transposed, SparseLayer};
use crate::permutation::SoftPermutation;
use crate::Scalar;

/// Which side of the weight matrix the permutation sits on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PermSide {
    /// `y = W P x`, permutation over the input columns.
    #[default]
    Column,
    /// `y = P W x`, permutation over the output rows.
    Row,
}

/// Structured sparse weights composed with one (soft or hard) permutation.
#[derive(Clone, Debug, PartialEq)]
pub struct PALayer<T> {
    weights: SparseLayer<T>,
    perm: SoftPermutation<T>,
    bias: Option<Vec<T>>,
    side: PermSide,
}

impl<T: Scalar> PALayer<T> {
    pub fn new(
        weights: SparseLayer<T>,
        perm: SoftPermutation<T>,
        bias: Option<Vec<T>>,
        side: PermSide,
    ) -> Result<Self> {
        let expected = match side {
            PermSide::Column => weights.cols(),
            PermSide::Row => weights.rows(),
        };
        if perm.n() != expected {
            return Err(Error::Dimension(format!(
                "{side:?} permutation of size {} for a {}x{} layer",
                perm.n(),
                weights.rows(),
                weights.cols()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != weights.rows() {
                return Err(Error::Dimension(format!("bias of length {} for {} rows", b.len(), weights.rows())));
            }
        }
        Ok(Self { weights, perm, bias, side })
    }

    pub fn rows(&self) -> usize {
        self.weights.rows()
    }

    pub fn cols(&self) -> usize {
        self.weights.cols()
    }

    pub fn side(&self) -> PermSide {
        self.side
    }

    pub fn weights(&self) -> &SparseLayer<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut SparseLayer<T> {
        &mut self.weights
    }

    pub fn perm(&self) -> &SoftPermutation<T> {
        &self.perm
    }

    pub fn perm_mut(&mut self) -> &mut SoftPermutation<T> {
        &mut self.perm
    }

    pub fn bias(&self) -> Option<&[T]> {
        self.bias.as_deref()
    }

    pub fn bias_mut(&mut self) -> Option<&mut Vec<T>> {
        self.bias.as_mut()
    }

    /// Pre-activation `z` together with the vector fed into `W` (column side) or
    /// produced by `W` (row side).
    pub(crate) fn forward_parts(&self, x: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        if x.len() != self.cols() {
            return Err(Error::Dimension(format!("layer expects {} inputs, got {}", self.cols(), x.len())));
        }
        let (mixed, mut z) = match self.side {
            PermSide::Column => {
                let a = self.perm.apply(x);
                let z = spmv(&self.weights, &a)?;
                (a, z)
            }
            PermSide::Row => {
                let u = spmv(&self.weights, x)?;
                let z = self.perm.apply(&u);
                (u, z)
            }
        };
        if let Some(b) = &self.bias {
            z.iter_mut().zip(b).for_each(|(z, &b)| *z = *z + b);
        }
        Ok((mixed, z))
    }

    /// Dense `W P` (or `P W`), for oracles.
    pub fn to_dense(&self) -> crate::matrix::Matrix<T> {
        match self.side {
            PermSide::Column => self.weights.to_dense().matmul(self.perm.matrix()),
            PermSide::Row => self.perm.matrix().matmul(&self.weights.to_dense()),
        }
    }
}

/// The transposed operator of a layer, applied without materializing it.
pub struct TransposedLayer<'a, T> {
    layer: &'a PALayer<T>,
}

impl<T: Scalar> TransposedLayer<'_, T> {
    /// `(W P)^T g = P^T (W^T g)`, or `(P W)^T g = W^T (P^T g)` on the row side.
    pub fn apply(&self, g: &[T]) -> Result<Vec<T>> {
        let layer = self.layer;
        if g.len() != layer.rows() {
            return Err(Error::Dimension(format!(
                "transposed layer expects {} entries, got {}",
                layer.rows(),
                g.len()
            )));
        }
        match layer.side {
            PermSide::Column => Ok(layer.perm.apply_transposed(&spmv_transposed(&layer.weights, g)?)),
            PermSide::Row => spmv_transposed(&layer.weights, &layer.perm.apply_transposed(g)),
        }
    }
}

pub fn transpose_layer<T: Scalar>(layer: &PALayer<T>) -> TransposedLayer<'_, T> {
    TransposedLayer { layer }
}
