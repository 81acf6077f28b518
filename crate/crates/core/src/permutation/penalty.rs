use super::SoftPermutation;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::Scalar;

/// Value of the l1-l2 permutation penalty with its per-row and per-column terms.
#[derive(Clone, Debug, PartialEq)]
pub struct PermPenaltyValue<T> {
    pub value: T,
    pub row_terms: Vec<T>,
    pub col_terms: Vec<T>,
}

/// `P(M) = sum_i (|M_i:|_1 - |M_i:|_2) + sum_j (|M_:j|_1 - |M_:j|_2)`.
///
/// On doubly stochastic matrices this vanishes exactly at permutation matrices.
pub fn perm_penalty<T: Scalar>(m: &SoftPermutation<T>) -> PermPenaltyValue<T> {
    penalty_of(m.matrix())
}

pub fn penalty_of<T: Scalar>(m: &Matrix<T>) -> PermPenaltyValue<T> {
    let (l1_r, l2_r, l1_c, l2_c) = norms(m);
    let row_terms: Vec<T> = l1_r.iter().zip(&l2_r).map(|(&a, &b)| (a - b).max(T::zero())).collect();
    let col_terms: Vec<T> = l1_c.iter().zip(&l2_c).map(|(&a, &b)| (a - b).max(T::zero())).collect();
    let value = row_terms.iter().copied().sum::<T>() + col_terms.iter().copied().sum::<T>();
    PermPenaltyValue { value, row_terms, col_terms }
}

/// Gradient of the penalty: `sign(M_ij) - M_ij/|M_i:|_2 + sign(M_ij) - M_ij/|M_:j|_2`,
/// taking the sign of a zero entry as +1 (the one-sided derivative on `M >= 0`).
pub fn perm_penalty_grad<T: Scalar>(m: &SoftPermutation<T>) -> Result<Matrix<T>> {
    penalty_grad_of(m.matrix())
}

pub fn penalty_grad_of<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>> {
    let (_, l2_r, _, l2_c) = norms(m);
    if let Some(r) = l2_r.iter().position(|&v| v == T::zero()) {
        return Err(Error::Degenerate(format!("row {r} is zero; project before differentiating")));
    }
    if let Some(c) = l2_c.iter().position(|&v| v == T::zero()) {
        return Err(Error::Degenerate(format!("column {c} is zero; project before differentiating")));
    }
    Ok(Matrix::from_fn(m.rows(), m.cols(), |i, j| {
        let v = m[(i, j)];
        let s = if v < T::zero() { -T::one() } else { T::one() };
        (s - v / l2_r[i]) + (s - v / l2_c[j])
    }))
}

#[allow(clippy::type_complexity)]
fn norms<T: Scalar>(m: &Matrix<T>) -> (Vec<T>, Vec<T>, Vec<T>, Vec<T>) {
    let (rows, cols) = (m.rows(), m.cols());
    let mut l1_r = vec![T::zero(); rows];
    let mut sq_r = vec![T::zero(); rows];
    let mut l1_c = vec![T::zero(); cols];
    let mut sq_c = vec![T::zero(); cols];
    for r in 0..rows {
        for (c, &v) in m.row(r).iter().enumerate() {
            let a = v.abs();
            l1_r[r] = l1_r[r] + a;
            sq_r[r] = sq_r[r] + v * v;
            l1_c[c] = l1_c[c] + a;
            sq_c[c] = sq_c[c] + v * v;
        }
    }
    (l1_r, sq_r.into_iter().map(T::sqrt).collect(), l1_c, sq_c.into_iter().map(T::sqrt).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::permutation::project_birkhoff;

    #[test]
    fn identity_is_zero() {
        let p = SoftPermutation::<f64>::identity(4);
        let v = perm_penalty(&p);
        assert_eq!(v.value, 0.0);
        assert_eq!(v.row_terms.len(), 4);
        let g = perm_penalty_grad(&p).unwrap();
        for i in 0..4 {
            assert_eq!(g[(i, i)], 0.0);
        }
    }

    #[test]
    fn uniform_closed_form() {
        for n in [2usize, 4, 9] {
            let u = project_birkhoff(&Matrix::<f64>::filled(n, n, 1.0), 10, 1e-12).unwrap();
            let expected = 2.0 * n as f64 * (1.0 - 1.0 / (n as f64).sqrt());
            assert!((perm_penalty(&u).value - expected).abs() < 1e-12);
        }
        let u = project_birkhoff(&Matrix::<f64>::filled(4, 4, 1.0), 10, 1e-12).unwrap();
        assert!((perm_penalty(&u).value - 4.0).abs() < 1e-12);
        let g = perm_penalty_grad(&u).unwrap();
        assert!(g.as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn zero_row_is_degenerate() {
        let m = Matrix::from_vec(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(matches!(penalty_grad_of(&m), Err(Error::Degenerate(_))));
    }

    #[test]
    fn terms_sum_to_value() {
        let m = Matrix::from_vec(2, 2, vec![0.2, 0.8, 0.8, 0.2]).unwrap();
        let v = penalty_of(&m);
        let total: f64 = v.row_terms.iter().chain(&v.col_terms).sum();
        assert!((total - v.value).abs() < 1e-15);
        assert!(v.row_terms.iter().chain(&v.col_terms).all(|&t| t >= 0.0));
    }
}
