use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::Scalar;

/// A bijection `l: [n] -> [n]` standing in for a permutation matrix, with
/// `(P x)_i = x[l(i)]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct IndexMap(Vec<usize>);

impl IndexMap {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &j in &map {
            if j >= n || std::mem::replace(&mut seen[j], true) {
                return Err(Error::Domain(format!("index map {map:?} is not a bijection")));
            }
        }
        Ok(Self(map))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &j)| i == j)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &j) in self.0.iter().enumerate() {
            inv[j] = i;
        }
        Self(inv)
    }

    /// Gather `x[l(i)]`. Pure data movement.
    pub fn apply<T: Copy>(&self, x: &[T]) -> Vec<T> {
        self.0.iter().map(|&j| x[j]).collect()
    }

    /// The 0/1 matrix with `P[i, l(i)] = 1`.
    pub fn to_matrix<T: Scalar>(&self) -> Matrix<T> {
        let n = self.0.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &j) in self.0.iter().enumerate() {
            m[(i, j)] = T::one();
        }
        m
    }
}

impl TryFrom<Vec<usize>> for IndexMap {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<IndexMap> for Vec<usize> {
    fn from(m: IndexMap) -> Self {
        m.0
    }
}

/// `P x` computed by reading `x` through the index map.
pub fn apply_reindex<T: Copy>(map: &IndexMap, x: &[T]) -> Result<Vec<T>> {
    if x.len() != map.len() {
        return Err(Error::Dimension(format!("reindex: x has {} entries, map has {}", x.len(), map.len())));
    }
    Ok(map.apply(x))
}
