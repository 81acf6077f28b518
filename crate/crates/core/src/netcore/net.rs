use super::layer::{PALayer, PermSide};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::patterns::spmv_transposed;
use crate::Scalar;

/// Feed-forward stack of permutation-augmented layers with ReLU between
/// layers and no activation after the last one.
#[derive(Clone, Debug, PartialEq)]
pub struct SmallNet<T> {
    layers: Vec<PALayer<T>>,
}

impl<T: Scalar> SmallNet<T> {
    pub fn new(layers: Vec<PALayer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].rows() != pair[1].cols() {
                return Err(Error::Dimension(format!(
                    "layer {i} outputs {} values but layer {} takes {}",
                    pair[0].rows(),
                    i + 1,
                    pair[1].cols()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[PALayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [PALayer<T>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].rows()
    }

    /// Indices of layers whose permutation is still soft.
    pub fn soft_layers(&self) -> Vec<usize> {
        self.layers.iter().enumerate().filter(|(_, l)| !l.perm().is_hardened()).map(|(i, _)| i).collect()
    }
}

#[inline]
pub fn relu<T: Scalar>(z: T) -> T {
    // Always +0 for non-positive input so re-indexed and multiplied paths agree bitwise.
    if z > T::zero() {
        z
    } else {
        T::zero()
    }
}

/// Per-layer activation record.
#[derive(Clone, Debug)]
pub struct LayerTape<T> {
    pub input: Vec<T>,
    /// `P x` on the column side, `W x` on the row side.
    pub mixed: Vec<T>,
    pub preact: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct Tape<T> {
    pub layers: Vec<LayerTape<T>>,
}

/// Training forward pass. Hardened permutations are applied by re-indexing,
/// soft ones by dense multiplication.
pub fn forward_train<T: Scalar>(net: &SmallNet<T>, x: &[T]) -> Result<(Vec<T>, Tape<T>)> {
    let last = net.layers.len() - 1;
    let mut cur = x.to_vec();
    let mut tape = Vec::with_capacity(net.layers.len());
    for (i, layer) in net.layers.iter().enumerate() {
        let (mixed, preact) = layer.forward_parts(&cur)?;
        if preact.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { layer: i });
        }
        let out = if i == last { preact.clone() } else { preact.iter().map(|&z| relu(z)).collect() };
        tape.push(LayerTape { input: std::mem::replace(&mut cur, out), mixed, preact });
    }
    Ok((cur, Tape { layers: tape }))
}

/// Gradients for one layer. Weight gradients exist only on active positions.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad<T> {
    pub d_weights: Vec<T>,
    /// `None` when the permutation is hardened (frozen).
    pub d_perm: Option<Matrix<T>>,
    pub d_bias: Option<Vec<T>>,
    /// Rank-one factors `(dL/d(Wv), v)` per sample, so the loss gradient at
    /// any (possibly inactive) weight position is `sum_s left_s[r] * right_s[c]`.
    pub probes: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> LayerGrad<T> {
    /// Loss gradient at weight position `(r, c)`, active or not.
    pub fn weight_grad_at(&self, r: usize, c: usize) -> T {
        self.probes.iter().fold(T::zero(), |acc, (left, right)| acc + left[r] * right[c])
    }

    fn accumulate(&mut self, other: LayerGrad<T>) {
        add_into(&mut self.d_weights, &other.d_weights);
        if let (Some(a), Some(b)) = (&mut self.d_perm, &other.d_perm) {
            add_into(a.as_mut_slice(), b.as_slice());
        }
        if let (Some(a), Some(b)) = (&mut self.d_bias, &other.d_bias) {
            add_into(a, b);
        }
        self.probes.extend(other.probes);
    }
}

fn add_into<T: Scalar>(a: &mut [T], b: &[T]) {
    a.iter_mut().zip(b).for_each(|(a, &b)| *a = *a + b);
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle<T> {
    pub layers: Vec<LayerGrad<T>>,
    pub d_input: Vec<T>,
}

impl<T: Scalar> GradientBundle<T> {
    /// Sums another sample's gradients into this one.
    pub fn accumulate(&mut self, other: GradientBundle<T>) {
        for (a, b) in self.layers.iter_mut().zip(other.layers) {
            a.accumulate(b);
        }
        add_into(&mut self.d_input, &other.d_input);
    }
}

/// Reverse pass for one sample. Only transposed sparse products and rank-one
/// updates on active positions are used, so no dense `R x C` weight or weight
/// gradient is ever formed.
pub fn backward<T: Scalar>(net: &SmallNet<T>, tape: &Tape<T>, d_output: &[T]) -> Result<GradientBundle<T>> {
    if tape.layers.len() != net.layers.len() {
        return Err(Error::Dimension(format!("tape has {} layers, net has {}", tape.layers.len(), net.layers.len())));
    }
    if d_output.len() != net.output_dim() {
        return Err(Error::Dimension(format!(
            "d_output has {} entries, net outputs {}",
            d_output.len(),
            net.output_dim()
        )));
    }
    let last = net.layers.len() - 1;
    let mut grads: Vec<LayerGrad<T>> = Vec::with_capacity(net.layers.len());
    let mut d_act = d_output.to_vec();
    for (i, (layer, rec)) in net.layers.iter().zip(&tape.layers).enumerate().rev() {
        if rec.preact.len() != layer.rows() || rec.input.len() != layer.cols() {
            return Err(Error::Dimension(format!("stale tape for layer {i}")));
        }
        let d_z: Vec<T> = if i == last {
            d_act
        } else {
            d_act.iter().zip(&rec.preact).map(|(&g, &z)| if z > T::zero() { g } else { T::zero() }).collect()
        };
        let perm = layer.perm();
        // `left` is the gradient w.r.t. W's output, `right` is W's input.
        let (left, right, d_x, d_perm) = match layer.side() {
            PermSide::Column => {
                let d_a = spmv_transposed(layer.weights(), &d_z)?;
                let d_perm = (!perm.is_hardened()).then(|| outer(&d_a, &rec.input));
                let d_x = perm.apply_transposed(&d_a);
                (d_z.clone(), rec.mixed.clone(), d_x, d_perm)
            }
            PermSide::Row => {
                let d_u = perm.apply_transposed(&d_z);
                let d_perm = (!perm.is_hardened()).then(|| outer(&d_z, &rec.mixed));
                let d_x = spmv_transposed(layer.weights(), &d_u)?;
                (d_u, rec.input.clone(), d_x, d_perm)
            }
        };
        let d_weights = layer.weights().mask().positions().map(|(r, c)| left[r] * right[c]).collect();
        grads.push(LayerGrad {
            d_weights,
            d_perm,
            d_bias: layer.bias().map(|_| d_z.clone()),
            probes: vec![(left, right)],
        });
        d_act = d_x;
    }
    grads.reverse();
    Ok(GradientBundle { layers: grads, d_input: d_act })
}

fn outer<T: Scalar>(a: &[T], b: &[T]) -> Matrix<T> {
    Matrix::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::patterns::{generate_mask, spmv, SparseLayer, StructurePattern};
    use crate::permutation::{IndexMap, SoftPermutation};

    #[test]
    fn identity_layer_has_no_final_relu() {
        let mask = generate_mask(&StructurePattern::diagonal([0]), 2, 2, 0).unwrap();
        let w = SparseLayer::new(mask, vec![1.0, 1.0]).unwrap();
        let layer = PALayer::new(w, SoftPermutation::identity(2), Some(vec![0.0; 2]), PermSide::Column).unwrap();
        let net = SmallNet::new(vec![layer]).unwrap();
        let (y, _) = forward_train(&net, &[-1.0, 2.0]).unwrap();
        assert_eq!(y, vec![-1.0, 2.0]);
    }

    #[test]
    fn hardened_shift_feeds_shifted_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mask = generate_mask(&StructurePattern::diagonal([0, 1]), 4, 4, 0).unwrap();
        let w = SparseLayer::random(mask, 1.0, &mut rng);
        let shift = IndexMap::new(vec![1, 2, 3, 0]).unwrap();
        let layer = PALayer::new(w.clone(), SoftPermutation::from_index_map(shift), None, PermSide::Column).unwrap();
        let net = SmallNet::new(vec![layer]).unwrap();
        let x = [0.5, -1.0, 2.0, 3.0];
        let (y, _) = forward_train(&net, &x).unwrap();
        assert_eq!(y, spmv(&w, &[-1.0, 2.0, 3.0, 0.5]).unwrap());
    }

    #[test]
    fn zero_upstream_gives_zero_bundle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l1 = {
            let mask = generate_mask(&StructurePattern::diagonal([0, 1]), 4, 4, 0).unwrap();
            PALayer::new(
                SparseLayer::random(mask, 1.0, &mut rng),
                SoftPermutation::uniform_init(4, 0.1, &mut rng),
                Some(vec![0.1; 4]),
                PermSide::Column,
            )
            .unwrap()
        };
        let l2 = {
            let mask = generate_mask(&StructurePattern::diagonal([0]), 4, 4, 0).unwrap();
            PALayer::new(
                SparseLayer::random(mask, 1.0, &mut rng),
                SoftPermutation::uniform_init(4, 0.1, &mut rng),
                Some(vec![0.1; 4]),
                PermSide::Row,
            )
            .unwrap()
        };
        let net = SmallNet::new(vec![l1, l2]).unwrap();
        let (_, tape) = forward_train(&net, &[1.0, 2.0, -1.0, 0.5]).unwrap();
        let g = backward(&net, &tape, &[0.0; 4]).unwrap();
        for lg in &g.layers {
            assert!(lg.d_weights.iter().all(|&v| v == 0.0));
            assert!(lg.d_perm.as_ref().unwrap().as_slice().iter().all(|&v| v == 0.0));
            assert!(lg.d_bias.as_ref().unwrap().iter().all(|&v| v == 0.0));
        }
        assert!(g.d_input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_reports_layer() {
        let mask = generate_mask(&StructurePattern::diagonal([0]), 2, 2, 0).unwrap();
        let w = SparseLayer::new(mask, vec![f64::MAX, 1.0]).unwrap();
        let layer = PALayer::new(w, SoftPermutation::identity(2), None, PermSide::Column).unwrap();
        let net = SmallNet::new(vec![layer]).unwrap();
        assert!(matches!(forward_train(&net, &[f64::MAX, 1.0]), Err(Error::NonFinite { layer: 0 })));
    }

    #[test]
    fn incompatible_layers_rejected() {
        let l = |r, c| {
            let mask = generate_mask(&StructurePattern::Unstructured { nnz: 1 }, r, c, 0).unwrap();
            PALayer::new(SparseLayer::<f64>::zeros(mask), SoftPermutation::identity(c), None, PermSide::Column).unwrap()
        };
        assert!(SmallNet::new(vec![l(3, 4), l(2, 4)]).is_err());
        assert!(SmallNet::new(vec![l(3, 4), l(2, 3)]).is_ok());
    }

    #[test]
    fn stale_tape_rejected() {
        let mask = generate_mask(&StructurePattern::diagonal([0]), 2, 2, 0).unwrap();
        let w = SparseLayer::new(mask, vec![1.0, 1.0]).unwrap();
        let layer = PALayer::new(w, SoftPermutation::identity(2), None, PermSide::Column).unwrap();
        let net = SmallNet::new(vec![layer.clone(), layer]).unwrap();
        let (_, mut tape) = forward_train(&net, &[1.0, 2.0]).unwrap();
        tape.layers.pop();
        assert!(backward(&net, &tape, &[1.0, 1.0]).is_err());
    }
}
