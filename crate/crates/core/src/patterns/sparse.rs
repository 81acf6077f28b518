use rand::Rng;

use super::Mask;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::Scalar;

/// Weight values on the active positions of a [`Mask`], in mask storage order.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseLayer<T> {
    mask: Mask,
    values: Vec<T>,
}

impl<T: Scalar> SparseLayer<T> {
    pub fn new(mask: Mask, values: Vec<T>) -> Result<Self> {
        if values.len() != mask.nnz() {
            return Err(Error::Dimension(format!("{} values for {} active positions", values.len(), mask.nnz())));
        }
        Ok(Self { mask, values })
    }

    pub fn zeros(mask: Mask) -> Self {
        let values = vec![T::zero(); mask.nnz()];
        Self { mask, values }
    }

    /// Uniform init in `[-scale, scale]`.
    pub fn random(mask: Mask, scale: T, rng: &mut impl Rng) -> Self {
        let s = scale.to_f64_lossy();
        let values = (0..mask.nnz()).map(|_| T::lit(rng.gen_range(-s..=s))).collect();
        Self { mask, values }
    }

    pub fn rows(&self) -> usize {
        self.mask.rows()
    }

    pub fn cols(&self) -> usize {
        self.mask.cols()
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub(crate) fn replace(&mut self, mask: Mask, values: Vec<T>) {
        debug_assert_eq!(mask.nnz(), values.len());
        self.mask = mask;
        self.values = values;
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.mask.slot(r, c).map_or(T::zero(), |s| self.values[s])
    }

    /// Dense copy with zeros off the mask.
    pub fn to_dense(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.rows(), self.cols());
        for ((r, c), &v) in self.mask.positions().zip(&self.values) {
            m[(r, c)] = v;
        }
        m
    }

    /// Transposed layer sharing the same values (reordered into transposed storage).
    pub fn transposed(&self) -> Self {
        let mask = self.mask.transposed();
        let values = mask.positions().map(|(r, c)| self.get(c, r)).collect();
        Self { mask, values }
    }
}

/// `y = W x`. Each row accumulates in ascending column order.
pub fn spmv<T: Scalar>(layer: &SparseLayer<T>, x: &[T]) -> Result<Vec<T>> {
    if x.len() != layer.cols() {
        return Err(Error::Dimension(format!("spmv: x has {} entries, layer has {} columns", x.len(), layer.cols())));
    }
    Ok(spmv_unchecked(layer.mask.row_ptr(), layer.mask.col_idx(), &layer.values, x))
}

#[inline]
pub(crate) fn spmv_unchecked<T: Scalar>(row_ptr: &[usize], col_idx: &[usize], values: &[T], x: &[T]) -> Vec<T> {
    let rows = row_ptr.len() - 1;
    let mut y = Vec::with_capacity(rows);
    for r in 0..rows {
        let (lo, hi) = (row_ptr[r], row_ptr[r + 1]);
        let mut acc = T::zero();
        for (&c, &w) in col_idx[lo..hi].iter().zip(&values[lo..hi]) {
            acc = acc + w * x[c];
        }
        y.push(acc);
    }
    y
}

/// `W^T g` computed from the row-major storage by scattering, without
/// densifying or re-sorting.
pub fn spmv_transposed<T: Scalar>(layer: &SparseLayer<T>, g: &[T]) -> Result<Vec<T>> {
    if g.len() != layer.rows() {
        return Err(Error::Dimension(format!(
            "spmv_transposed: g has {} entries, layer has {} rows",
            g.len(),
            layer.rows()
        )));
    }
    let row_ptr = layer.mask.row_ptr();
    let col_idx = layer.mask.col_idx();
    let mut out = vec![T::zero(); layer.cols()];
    for (r, &gr) in g.iter().enumerate() {
        for s in row_ptr[r]..row_ptr[r + 1] {
            let c = col_idx[s];
            out[c] = out[c] + layer.values[s] * gr;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::patterns::{generate_mask, StructurePattern};

    fn identity(n: usize) -> SparseLayer<f64> {
        let mask = generate_mask(&StructurePattern::diagonal([0]), n, n, 0).unwrap();
        SparseLayer::new(mask, vec![1.0; n]).unwrap()
    }

    #[test]
    fn identity_roundtrips() {
        let l = identity(3);
        assert_eq!(spmv(&l, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let l = identity(2);
        assert_eq!(spmv_transposed(&l, &[4.0, 5.0]).unwrap(), vec![4.0, 5.0]);
    }

    #[test]
    fn zero_values_give_zero() {
        let mask = generate_mask(&StructurePattern::Nm { n_keep: 2, m_group: 4 }, 3, 8, 1).unwrap();
        let l = SparseLayer::<f64>::zeros(mask);
        assert!(spmv(&l, &[1.0; 8]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch() {
        let l = identity(3);
        assert!(spmv(&l, &[1.0]).is_err());
        assert!(spmv_transposed(&l, &[1.0; 4]).is_err());
    }

    #[test]
    fn transposed_layer_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = StructurePattern::diagonal([0, 2, -3]);
        let l = SparseLayer::<f64>::random(generate_mask(&p, 5, 7, 0).unwrap(), 1.0, &mut rng);
        assert_eq!(l.transposed().to_dense(), l.to_dense().transpose());
    }
}
