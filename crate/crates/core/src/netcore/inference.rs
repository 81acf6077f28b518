use super::layer::PermSide;
use super::net::{relu, SmallNet};
use crate::error::{Error, Result};
use crate::patterns::spmv;
use crate::permutation::IndexMap;
use crate::Scalar;

/// A hardened layer with its index map folded into the sparse kernel.
///
/// On the column side the stored column indices are composed with the index
/// map, so the kernel reads `x[l(j)]` directly; no permutation is ever
/// multiplied. On the row side the output is written through the map.
#[derive(Clone, Debug)]
pub struct InferenceLayer<T> {
    row_ptr: Vec<usize>,
    gather_idx: Vec<usize>,
    values: Vec<T>,
    bias: Option<Vec<T>>,
    out_map: Option<IndexMap>,
    cols: usize,
}

impl<T: Scalar> InferenceLayer<T> {
    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `y_k = sum_j W[k, j] x[l(j)]`, same accumulation order as the plain kernel.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let rows = self.rows();
        let mut u = Vec::with_capacity(rows);
        for r in 0..rows {
            let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut acc = T::zero();
            for (&c, &w) in self.gather_idx[lo..hi].iter().zip(&self.values[lo..hi]) {
                acc = acc + w * x[c];
            }
            u.push(acc);
        }
        let mut z = match &self.out_map {
            Some(map) => map.apply(&u),
            None => u,
        };
        if let Some(b) = &self.bias {
            z.iter_mut().zip(b).for_each(|(z, &b)| *z = *z + b);
        }
        z
    }
}

/// A fully hardened network compiled for re-indexed inference.
#[derive(Clone, Debug)]
pub struct InferenceNet<T> {
    layers: Vec<InferenceLayer<T>>,
}

impl<T: Scalar> InferenceNet<T> {
    /// Fails with the list of layers whose permutation is still soft.
    pub fn compile(net: &SmallNet<T>) -> Result<Self> {
        let soft = net.soft_layers();
        if !soft.is_empty() {
            return Err(Error::SoftLayers(soft));
        }
        let layers = net
            .layers()
            .iter()
            .map(|layer| {
                let map = layer.perm().index_map().expect("checked hardened");
                let mask = layer.weights().mask();
                let (gather_idx, out_map) = match layer.side() {
                    PermSide::Column => (mask.col_idx().iter().map(|&c| map.as_slice()[c]).collect(), None),
                    PermSide::Row => (mask.col_idx().to_vec(), Some(map.clone())),
                };
                InferenceLayer {
                    row_ptr: mask.row_ptr().to_vec(),
                    gather_idx,
                    values: layer.weights().values().to_vec(),
                    bias: layer.bias().map(<[T]>::to_vec),
                    out_map,
                    cols: layer.cols(),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[InferenceLayer<T>] {
        &self.layers
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.layers[0].cols {
            return Err(Error::Dimension(format!("net expects {} inputs, got {}", self.layers[0].cols, x.len())));
        }
        let last = self.layers.len() - 1;
        let mut cur = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&cur);
            cur = if i == last { z } else { z.into_iter().map(relu).collect() };
        }
        Ok(cur)
    }
}

/// Inference through index maps only. Errors if any permutation is soft.
pub fn forward_inference<T: Scalar>(net: &SmallNet<T>, x: &[T]) -> Result<Vec<T>> {
    InferenceNet::compile(net)?.forward(x)
}

/// Reference forward that multiplies every permutation matrix explicitly,
/// soft or hard.
pub fn forward_explicit<T: Scalar>(net: &SmallNet<T>, x: &[T]) -> Result<Vec<T>> {
    let last = net.layers().len() - 1;
    let mut cur = x.to_vec();
    for (i, layer) in net.layers().iter().enumerate() {
        let p = layer.perm().matrix();
        let mut z = match layer.side() {
            PermSide::Column => spmv(layer.weights(), &p.matvec(&cur))?,
            PermSide::Row => p.matvec(&spmv(layer.weights(), &cur)?),
        };
        if let Some(b) = layer.bias() {
            z.iter_mut().zip(b).for_each(|(z, &b)| *z = *z + b);
        }
        cur = if i == last { z } else { z.into_iter().map(relu).collect() };
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::netcore::{forward_train, PALayer};
    use crate::patterns::{generate_mask, SparseLayer, StructurePattern};
    use crate::permutation::SoftPermutation;

    #[test]
    fn soft_layers_are_listed() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mk = |soft: bool, rng: &mut ChaCha8Rng| {
            let mask = generate_mask(&StructurePattern::diagonal([0]), 3, 3, 0).unwrap();
            let p = if soft { SoftPermutation::uniform_init(3, 0.1, rng) } else { SoftPermutation::identity(3) };
            PALayer::new(SparseLayer::random(mask, 1.0, rng), p, None, PermSide::Column).unwrap()
        };
        let net = SmallNet::new(vec![mk(false, &mut rng), mk(true, &mut rng), mk(true, &mut rng)]).unwrap();
        match forward_inference(&net, &[1.0, 2.0, 3.0]) {
            Err(Error::SoftLayers(l)) => assert_eq!(l, vec![1, 2]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn identity_perms_match_plain_sparse_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mask = generate_mask(&StructurePattern::Nm { n_keep: 2, m_group: 4 }, 4, 8, 1).unwrap();
        let w = SparseLayer::random(mask, 1.0, &mut rng);
        let layer = PALayer::new(w.clone(), SoftPermutation::identity(8), None, PermSide::Column).unwrap();
        let net = SmallNet::new(vec![layer]).unwrap();
        let x: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        assert_eq!(forward_inference(&net, &x).unwrap(), spmv(&w, &x).unwrap());
    }

    #[test]
    fn one_hot_rows_gather() {
        let mask = generate_mask(&StructurePattern::diagonal([2]), 4, 4, 0).unwrap();
        let w = SparseLayer::new(mask, vec![1.0; 4]).unwrap();
        let p = SoftPermutation::from_index_map(IndexMap::new(vec![3, 0, 2, 1]).unwrap());
        let net = SmallNet::new(vec![PALayer::new(w, p, None, PermSide::Column).unwrap()]).unwrap();
        let x = [10.0, 20.0, 30.0, 40.0];
        // row r reads a[(r+2)%4] = x[l((r+2)%4)]
        assert_eq!(forward_inference(&net, &x).unwrap(), vec![30.0, 20.0, 40.0, 10.0]);
        assert_eq!(forward_train(&net, &x).unwrap().0, vec![30.0, 20.0, 40.0, 10.0]);
    }
}
