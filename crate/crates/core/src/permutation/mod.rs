//! Soft permutations on the Birkhoff polytope: projection, the l1-l2
//! permutation penalty, hard decoding and index maps for re-indexed inference.

mod assignment;
mod birkhoff;
mod index_map;
mod penalty;

pub use assignment::max_weight_assignment;
pub use birkhoff::{project_birkhoff, SINKHORN_EPS};
pub use index_map::{apply_reindex, IndexMap};
pub use penalty::{penalty_grad_of, penalty_of, perm_penalty, perm_penalty_grad, PermPenaltyValue};

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::Scalar;

/// Default Sinkhorn settings used after every optimizer step.
pub const PROJECTION_TOL: f64 = 1e-8;
pub const PROJECTION_MAX_ITERS: usize = 200;

/// A square nonnegative matrix kept (approximately) doubly stochastic, or a
/// hardened 0/1 permutation together with its index map.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftPermutation<T> {
    matrix: Matrix<T>,
    index_map: Option<IndexMap>,
    /// Largest row or column sum deviation from 1 after the last projection.
    deviation: T,
    converged: bool,
}

impl<T: Scalar> SoftPermutation<T> {
    /// Hardened identity.
    pub fn identity(n: usize) -> Self {
        Self::from_index_map(IndexMap::identity(n))
    }

    /// Hardened permutation with `(P x)_i = x[map(i)]`.
    pub fn from_index_map(map: IndexMap) -> Self {
        Self { matrix: map.to_matrix(), index_map: Some(map), deviation: T::zero(), converged: true }
    }

    /// Uniform matrix plus `U(0, noise)` symmetry-breaking jitter, projected
    /// onto the polytope.
    pub fn uniform_init(n: usize, noise: f64, rng: &mut impl Rng) -> Self {
        let base = 1.0 / n as f64;
        let a = Matrix::from_fn(n, n, |_, _| T::lit(base + if noise > 0.0 { rng.gen_range(0.0..noise) } else { 0.0 }));
        project_birkhoff(&a, PROJECTION_MAX_ITERS, T::lit(PROJECTION_TOL)).expect("uniform init is finite and square")
    }

    pub(crate) fn from_parts(matrix: Matrix<T>, deviation: T, converged: bool) -> Self {
        Self { matrix, index_map: None, deviation, converged }
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    pub fn is_hardened(&self) -> bool {
        self.index_map.is_some()
    }

    pub fn index_map(&self) -> Option<&IndexMap> {
        self.index_map.as_ref()
    }

    pub fn deviation(&self) -> T {
        self.deviation
    }

    /// False when the last projection stopped at its iteration cap.
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// `P x`: re-indexing when hardened, dense multiply otherwise.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        match &self.index_map {
            Some(map) => map.apply(x),
            None => self.matrix.matvec(x),
        }
    }

    /// `P^T g`: inverse re-indexing when hardened.
    pub fn apply_transposed(&self, g: &[T]) -> Vec<T> {
        match &self.index_map {
            Some(map) => map.inverse().apply(g),
            None => self.matrix.matvec_transposed(g),
        }
    }

    /// Projected gradient step `M <- proj(M - lr * grad)`. Hardened
    /// permutations are frozen and reject updates.
    pub fn step(&mut self, grad: &Matrix<T>, lr: T) -> Result<()> {
        if self.is_hardened() {
            return Err(Error::Domain("hardened permutation is frozen".into()));
        }
        if grad.rows() != self.n() || grad.cols() != self.n() {
            return Err(Error::Dimension(format!("gradient {}x{} for n={}", grad.rows(), grad.cols(), self.n())));
        }
        let mut a = self.matrix.clone();
        for (m, &g) in a.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *m = *m - lr * g;
        }
        *self = project_birkhoff(&a, PROJECTION_MAX_ITERS, T::lit(PROJECTION_TOL))?;
        Ok(())
    }
}

/// Decodes the nearest permutation by maximum-weight assignment
/// (`max sum_i M[i, pi(i)]`), preferring the lowest column index among ties.
pub fn harden<T: Scalar>(m: &SoftPermutation<T>) -> SoftPermutation<T> {
    if m.is_hardened() {
        return m.clone();
    }
    let n = m.n();
    let weights: Vec<f64> = m.matrix.as_slice().iter().map(|v| v.to_f64_lossy()).collect();
    let perm = max_weight_assignment(&weights, n);
    SoftPermutation::from_index_map(IndexMap::new(perm).expect("assignment is a bijection"))
}

/// `1 - ||P - I||_F / sqrt(2N)` for a hardened permutation.
pub fn identity_distance<T: Scalar>(p: &SoftPermutation<T>) -> Result<T> {
    let map = p.index_map().ok_or(Error::NotHardened)?;
    let n = map.len();
    if n == 0 {
        return Ok(T::one());
    }
    let displaced = map.as_slice().iter().enumerate().filter(|&(i, &j)| i != j).count();
    // Each displaced row contributes two unit entries to ||P - I||_F^2.
    let frob = T::lit((2 * displaced) as f64).sqrt();
    Ok(T::one() - frob / T::lit((2 * n) as f64).sqrt())
}

/// Index map `l` with `(P x)_i = x[l(i)]`.
pub fn extract_index_map<T: Scalar>(p: &SoftPermutation<T>) -> Result<IndexMap> {
    p.index_map().cloned().ok_or(Error::NotHardened)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn cyclic(n: usize) -> SoftPermutation<f64> {
        SoftPermutation::from_index_map(IndexMap::new((0..n).map(|i| (i + 1) % n).collect()).unwrap())
    }

    #[test]
    fn identity_distance_cases() {
        for n in [1, 4, 9] {
            assert_eq!(identity_distance(&SoftPermutation::<f64>::identity(n)).unwrap(), 1.0);
        }
        assert!(identity_distance(&cyclic(4)).unwrap().abs() < 1e-15);
        let swap = SoftPermutation::<f64>::from_index_map(IndexMap::new(vec![1, 0, 2, 3]).unwrap());
        let direct = {
            let d = swap.matrix().clone();
            let i = Matrix::<f64>::identity(4);
            let fro: f64 = d.as_slice().iter().zip(i.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            1.0 - fro / 8f64.sqrt()
        };
        let got = identity_distance(&swap).unwrap();
        assert!((got - direct).abs() < 1e-15);
        assert!((got - 0.292_893_218_813_452_5).abs() < 1e-12);
    }

    #[test]
    fn identity_distance_requires_hard() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let soft = SoftPermutation::<f64>::uniform_init(4, 1e-3, &mut rng);
        assert!(matches!(identity_distance(&soft), Err(Error::NotHardened)));
        assert!(extract_index_map(&soft).is_err());
    }

    #[test]
    fn index_maps() {
        assert_eq!(extract_index_map(&SoftPermutation::<f64>::identity(5)).unwrap().as_slice(), &[0, 1, 2, 3, 4]);
        assert_eq!(extract_index_map(&cyclic(4)).unwrap().as_slice(), &[1, 2, 3, 0]);
        let p = cyclic(4);
        assert_eq!(p.matrix()[(0, 1)], 1.0);
        assert_eq!(p.matrix()[(3, 0)], 1.0);
    }

    #[test]
    fn harden_cases() {
        let id = SoftPermutation::<f64>::identity(4);
        assert_eq!(harden(&id), id);

        let uniform = project_birkhoff(&Matrix::filled(5, 5, 1.0), 10, 1e-12).unwrap();
        assert_eq!(harden(&uniform).index_map().unwrap().as_slice(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn near_permutation_decodes_to_brute_force_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut perm: Vec<usize> = (0..4).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let p = IndexMap::new(perm.clone()).unwrap().to_matrix::<f64>();
            let m = Matrix::from_fn(4, 4, |r, c| 0.9 * p[(r, c)] + 0.1 * 0.25);
            let soft = project_birkhoff(&m, 100, 1e-12).unwrap();
            let hard = harden(&soft);
            // brute force over all 4! assignments
            let best = permutations(4)
                .into_iter()
                .max_by(|a, b| {
                    let sa: f64 = a.iter().enumerate().map(|(i, &j)| m[(i, j)]).sum();
                    let sb: f64 = b.iter().enumerate().map(|(i, &j)| m[(i, j)]).sum();
                    sa.partial_cmp(&sb).unwrap()
                })
                .unwrap();
            assert_eq!(best, perm);
            assert_eq!(hard.index_map().unwrap().as_slice(), perm.as_slice());
            assert_eq!(harden(&hard), hard);
        }
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn frozen_after_hardening() {
        let mut p = SoftPermutation::<f64>::identity(3);
        assert!(p.step(&Matrix::zeros(3, 3), 0.1).is_err());
    }
}
