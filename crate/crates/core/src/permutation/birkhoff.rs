use super::SoftPermutation;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::Scalar;

/// Added to every entry of an all-zero row or column before normalizing.
pub const SINKHORN_EPS: f64 = 1e-12;

/// Projects `a` onto (the neighbourhood of) the Birkhoff polytope.
///
/// Negative entries are clamped to zero, empty rows and columns are floored
/// with [`SINKHORN_EPS`], then rows and columns are normalized alternately
/// until the largest row/column sum deviation is at most `tol` or `max_iters`
/// sweeps have run. Hitting the cap is not an error; the returned matrix
/// records the deviation it reached and `converged() == false`.
pub fn project_birkhoff<T: Scalar>(a: &Matrix<T>, max_iters: usize, tol: T) -> Result<SoftPermutation<T>> {
    let n = a.rows();
    if n == 0 || a.cols() != n {
        return Err(Error::Dimension(format!(
            "birkhoff projection needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if a.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite entry in birkhoff projection input".into()));
    }
    let eps = T::lit(SINKHORN_EPS);
    let mut m = a.map(|v| v.max(T::zero()));
    for r in 0..n {
        if m.row(r).iter().all(|&v| v == T::zero()) {
            m.row_mut(r).iter_mut().for_each(|v| *v = eps);
        }
    }
    for c in 0..n {
        if (0..n).all(|r| m[(r, c)] == T::zero()) {
            (0..n).for_each(|r| m[(r, c)] = eps);
        }
    }

    let mut deviation = max_deviation(&m);
    let mut iters = 0;
    while deviation > tol && iters < max_iters {
        for r in 0..n {
            let s: T = m.row(r).iter().copied().sum();
            m.row_mut(r).iter_mut().for_each(|v| *v = *v / s);
        }
        let mut col_sums = vec![T::zero(); n];
        for r in 0..n {
            for (cs, &v) in col_sums.iter_mut().zip(m.row(r)) {
                *cs = *cs + v;
            }
        }
        for r in 0..n {
            for (v, &cs) in m.row_mut(r).iter_mut().zip(&col_sums) {
                *v = *v / cs;
            }
        }
        deviation = max_deviation(&m);
        iters += 1;
    }
    Ok(SoftPermutation::from_parts(m, deviation, deviation <= tol))
}

fn max_deviation<T: Scalar>(m: &Matrix<T>) -> T {
    let n = m.rows();
    let mut dev = T::zero();
    let mut col_sums = vec![T::zero(); n];
    for r in 0..n {
        let row = m.row(r);
        let s: T = row.iter().copied().sum();
        dev = dev.max((s - T::one()).abs());
        for (cs, &v) in col_sums.iter_mut().zip(row) {
            *cs = *cs + v;
        }
    }
    col_sums.into_iter().fold(dev, |d, s| d.max((s - T::one()).abs()))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::permutation::IndexMap;

    #[test]
    fn all_ones_becomes_uniform() {
        let p = project_birkhoff(&Matrix::<f64>::filled(3, 3, 1.0), 200, 1e-8).unwrap();
        assert!(p.matrix().as_slice().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(p.converged());
    }

    #[test]
    fn fixed_points() {
        let perm = IndexMap::new(vec![2, 0, 1, 3]).unwrap().to_matrix::<f64>();
        let p = project_birkhoff(&perm, 200, 1e-8).unwrap();
        assert_eq!(p.matrix(), &perm);

        let ds = Matrix::from_vec(2, 2, vec![0.3, 0.7, 0.7, 0.3]).unwrap();
        let p = project_birkhoff(&ds, 200, 1e-8).unwrap();
        assert!(p.matrix().max_abs_diff(&ds) <= 1e-8);
    }

    #[test]
    fn degenerate_rows_are_floored() {
        let a = Matrix::from_vec(2, 2, vec![0.0f64, 0.0, -1.0, 2.0]).unwrap();
        let p = project_birkhoff(&a, 500, 1e-8).unwrap();
        assert!(p.matrix().as_slice().iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn reports_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Matrix::from_fn(6, 6, |_, _| rng.gen_range(0.0..1.0f64).powi(8));
        let p = project_birkhoff(&a, 1, 1e-14).unwrap();
        assert!(!p.converged());
        assert!(p.deviation() > 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(project_birkhoff(&Matrix::<f64>::zeros(2, 3), 10, 1e-8).is_err());
        let a = Matrix::from_vec(1, 1, vec![f64::NAN]).unwrap();
        assert!(project_birkhoff(&a, 10, 1e-8).is_err());
    }
}
