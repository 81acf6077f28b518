use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{LayerGrad, PALayer};
use crate::patterns::mask::{block_positions, canonical_offset, diagonal_positions};
use crate::patterns::{Mask, StructurePattern};
use crate::Scalar;

/// Growth criterion for unstructured layers. Structured families always grow
/// by aggregated gradient magnitude.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Growth {
    #[default]
    Rigl,
    /// Uniformly random regrowth.
    Set,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneGrowOutcome {
    /// Structure units (diagonals, blocks, groups or entries) swapped out and in.
    pub swapped: usize,
}

/// One prune/grow update at the granularity of the layer's structure family.
///
/// Diagonals and blocks: the `ceil(fraction * K)` active units with the
/// smallest l2 norm are replaced by the inactive units of equal size with the
/// largest summed gradient magnitude. N:M: in up to `ceil(fraction * groups)`
/// groups, ranked by gain, the smallest active weight is swapped for the
/// largest-gradient inactive slot when that gradient exceeds the weight.
/// Unstructured: entry-wise magnitude pruning and gradient (or random) growth.
///
/// Gradients at inactive positions come from the rank-one probes in `grad`
/// and are only evaluated on candidate units. New weights start at zero and
/// the active count is unchanged.
pub fn prune_grow<T: Scalar>(
    layer: &mut PALayer<T>,
    grad: &LayerGrad<T>,
    fraction: f64,
    growth: Growth,
    rng: &mut impl Rng,
) -> Result<PruneGrowOutcome> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Domain(format!("prune fraction {fraction} outside [0, 1)")));
    }
    if grad.d_weights.len() != layer.weights().mask().nnz() {
        return Err(Error::Dimension("gradient does not match layer mask".into()));
    }
    if fraction == 0.0 {
        return Ok(PruneGrowOutcome::default());
    }
    let mask = layer.weights().mask();
    if growth == Growth::Set && !matches!(mask.descriptor(), StructurePattern::Unstructured { .. }) {
        return Err(Error::Config("random growth is only defined for unstructured layers".into()));
    }
    let (rows, cols) = (mask.rows(), mask.cols());
    let update = match mask.descriptor().clone() {
        StructurePattern::Diagonal { offsets, wrap } => {
            let keys: Vec<i64> =
                if wrap { (0..rows.max(cols) as i64).collect() } else { (1 - rows as i64..cols as i64).collect() };
            let canon = |o: i64| {
                if wrap {
                    canonical_offset(o, rows, cols) as i64
                } else {
                    o
                }
            };
            let active: Vec<i64> = offsets.iter().map(|&o| canon(o)).collect();
            let inactive: Vec<i64> = keys.into_iter().filter(|k| !active.contains(k)).collect();
            let swaps =
                swap_units(layer, grad, fraction, &active, &inactive, |&o| diagonal_positions(o, wrap, rows, cols));
            swaps.map(|swaps| {
                let mut offsets = offsets.clone();
                for (slot, new) in &swaps {
                    offsets[*slot] = *new;
                }
                (StructurePattern::Diagonal { offsets, wrap }, None, swaps.len())
            })
        }
        StructurePattern::Block { block_size, active_blocks } => {
            let b = block_size;
            let inactive: Vec<(usize, usize)> = (0..rows / b)
                .flat_map(|br| (0..cols / b).map(move |bc| (br, bc)))
                .filter(|k| !active_blocks.contains(k))
                .collect();
            let swaps = swap_units(layer, grad, fraction, &active_blocks, &inactive, |&(br, bc)| {
                block_positions(br, bc, b).collect()
            });
            swaps.map(|swaps| {
                let mut active_blocks = active_blocks.clone();
                for (slot, new) in &swaps {
                    active_blocks[*slot] = *new;
                }
                (StructurePattern::Block { block_size, active_blocks }, None, swaps.len())
            })
        }
        StructurePattern::Nm { m_group, .. } => {
            let (positions, swapped) = nm_swaps(layer, grad, fraction, m_group);
            Some((mask.descriptor().clone(), Some(positions), swapped))
        }
        StructurePattern::Unstructured { .. } => {
            let (positions, swapped) = entry_swaps(layer, grad, fraction, growth, rng);
            Some((mask.descriptor().clone(), Some(positions), swapped))
        }
    };

    let Some((descriptor, explicit, swapped)) = update else {
        return Ok(PruneGrowOutcome::default());
    };
    if swapped == 0 {
        return Ok(PruneGrowOutcome::default());
    }
    let positions = match explicit {
        Some(p) => p,
        None => support_of(&descriptor, rows, cols),
    };
    let new_mask = Mask::from_positions(rows, cols, positions, descriptor)?;
    let old = layer.weights();
    let values =
        new_mask.positions().map(|(r, c)| old.mask().slot(r, c).map_or(T::zero(), |s| old.values()[s])).collect();
    layer.weights_mut().replace(new_mask, values);
    Ok(PruneGrowOutcome { swapped })
}

fn support_of(p: &StructurePattern, rows: usize, cols: usize) -> Vec<(usize, usize)> {
    match p {
        StructurePattern::Diagonal { offsets, wrap } => {
            offsets.iter().flat_map(|&o| diagonal_positions(o, *wrap, rows, cols)).collect()
        }
        StructurePattern::Block { block_size, active_blocks } => {
            active_blocks.iter().flat_map(|&(br, bc)| block_positions(br, bc, *block_size)).collect()
        }
        _ => unreachable!("explicit supports are computed by the caller"),
    }
}

fn desc(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// Chooses `(slot in active list, replacement unit)` pairs. Units are pruned in
/// order of increasing norm; each takes the best-scoring inactive unit of the
/// same size. Ties go to the earlier unit.
fn swap_units<T: Scalar, K: Copy + PartialEq>(
    layer: &PALayer<T>,
    grad: &LayerGrad<T>,
    fraction: f64,
    active: &[K],
    inactive: &[K],
    positions: impl Fn(&K) -> Vec<(usize, usize)>,
) -> Option<Vec<(usize, K)>> {
    let k = ((fraction * active.len() as f64).ceil() as usize).min(active.len()).min(inactive.len());
    if k == 0 {
        return None;
    }
    let w = layer.weights();
    let norm = |unit: &K| {
        positions(unit)
            .into_iter()
            .map(|(r, c)| w.mask().slot(r, c).map_or(0.0, |s| w.values()[s].to_f64_lossy().powi(2)))
            .sum::<f64>()
            .sqrt()
    };
    let mut prune: Vec<(usize, f64, usize)> =
        active.iter().enumerate().map(|(i, u)| (i, norm(u), positions(u).len())).collect();
    prune.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));

    let mut grow: Vec<(usize, f64, usize)> = inactive
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let pos = positions(u);
            let score = pos.iter().map(|&(r, c)| grad.weight_grad_at(r, c).to_f64_lossy().abs()).sum();
            (i, score, pos.len())
        })
        .collect();
    grow.sort_by(|a, b| desc(a.1, b.1).then(a.0.cmp(&b.0)));

    let mut taken = vec![false; grow.len()];
    let mut swaps = Vec::with_capacity(k);
    for &(slot, _, size) in prune.iter().take(k) {
        if let Some(g) = (0..grow.len()).find(|&g| !taken[g] && grow[g].2 == size) {
            taken[g] = true;
            swaps.push((slot, inactive[grow[g].0]));
        }
    }
    Some(swaps)
}

fn nm_swaps<T: Scalar>(
    layer: &PALayer<T>,
    grad: &LayerGrad<T>,
    fraction: f64,
    m: usize,
) -> (Vec<(usize, usize)>, usize) {
    let w = layer.weights();
    let mask = w.mask();
    let groups_per_row = mask.cols() / m;
    // (gain, row, prune col, grow col)
    let mut candidates: Vec<(f64, usize, usize, usize)> = Vec::new();
    for r in 0..mask.rows() {
        for g in 0..groups_per_row {
            let cols = g * m..(g + 1) * m;
            let mut weakest: Option<(f64, usize)> = None;
            let mut strongest: Option<(f64, usize)> = None;
            for c in cols {
                match mask.slot(r, c) {
                    Some(s) => {
                        let mag = w.values()[s].to_f64_lossy().abs();
                        if weakest.is_none_or(|(b, _)| mag < b) {
                            weakest = Some((mag, c));
                        }
                    }
                    None => {
                        let mag = grad.weight_grad_at(r, c).to_f64_lossy().abs();
                        if strongest.is_none_or(|(b, _)| mag > b) {
                            strongest = Some((mag, c));
                        }
                    }
                }
            }
            if let (Some((wm, wc)), Some((gm, gc))) = (weakest, strongest) {
                if gm > wm {
                    candidates.push((gm - wm, r, wc, gc));
                }
            }
        }
    }
    let budget = (fraction * (mask.rows() * groups_per_row) as f64).ceil() as usize;
    candidates.sort_by(|a, b| desc(a.0, b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    candidates.truncate(budget);
    let mut positions: Vec<(usize, usize)> = mask.positions().collect();
    for &(_, r, pc, gc) in &candidates {
        let i = positions.iter().position(|&p| p == (r, pc)).expect("pruned position is active");
        positions[i] = (r, gc);
    }
    (positions, candidates.len())
}

fn entry_swaps<T: Scalar>(
    layer: &PALayer<T>,
    grad: &LayerGrad<T>,
    fraction: f64,
    growth: Growth,
    rng: &mut impl Rng,
) -> (Vec<(usize, usize)>, usize) {
    let w = layer.weights();
    let mask = w.mask();
    let inactive: Vec<(usize, usize)> = (0..mask.rows())
        .flat_map(|r| (0..mask.cols()).map(move |c| (r, c)))
        .filter(|&(r, c)| !mask.contains(r, c))
        .collect();
    let nnz = mask.nnz();
    let k = ((fraction * nnz as f64).ceil() as usize).min(nnz).min(inactive.len());
    let mut active: Vec<(usize, (usize, usize))> = mask.positions().enumerate().collect();
    if k == 0 {
        return (active.into_iter().map(|(_, p)| p).collect(), 0);
    }
    active.sort_by(|a, b| {
        let (x, y) = (w.values()[a.0].to_f64_lossy().abs(), w.values()[b.0].to_f64_lossy().abs());
        x.partial_cmp(&y).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
    });
    let grown: Vec<(usize, usize)> = match growth {
        Growth::Rigl => {
            let mut scored: Vec<(usize, f64)> = inactive
                .iter()
                .enumerate()
                .map(|(i, &(r, c))| (i, grad.weight_grad_at(r, c).to_f64_lossy().abs()))
                .collect();
            scored.sort_by(|a, b| desc(a.1, b.1).then(a.0.cmp(&b.0)));
            scored.iter().take(k).map(|&(i, _)| inactive[i]).collect()
        }
        Growth::Set => sample(rng, inactive.len(), k).into_iter().map(|i| inactive[i]).collect(),
    };
    let kept = active.into_iter().skip(k).map(|(_, p)| p);
    (kept.chain(grown).collect(), k)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::netcore::{backward, forward_train, PermSide, SmallNet};
    use crate::patterns::{generate_mask, validate_mask, SparseLayer};
    use crate::permutation::SoftPermutation;

    fn probe_grad(rows: usize, cols: usize, left: Vec<f64>, right: Vec<f64>, nnz: usize) -> LayerGrad<f64> {
        assert_eq!((left.len(), right.len()), (rows, cols));
        LayerGrad { d_weights: vec![0.0; nnz], d_perm: None, d_bias: None, probes: vec![(left, right)] }
    }

    fn layer(pattern: StructurePattern, rows: usize, cols: usize, values: Option<Vec<f64>>, seed: u64) -> PALayer<f64> {
        let mask = generate_mask(&pattern, rows, cols, seed).unwrap();
        let w = match values {
            Some(v) => SparseLayer::new(mask, v).unwrap(),
            None => SparseLayer::random(mask, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)),
        };
        PALayer::new(w, SoftPermutation::identity(cols), None, PermSide::Column).unwrap()
    }

    #[test]
    fn zero_fraction_is_noop() {
        let mut l = layer(StructurePattern::diagonal([0, 1]), 8, 8, None, 1);
        let before = l.clone();
        let g = probe_grad(8, 8, vec![1.0; 8], vec![1.0; 8], 16);
        let out = prune_grow(&mut l, &g, 0.0, Growth::Rigl, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.swapped, 0);
        assert_eq!(l, before);
    }

    #[test]
    fn zero_diagonal_replaced_by_best_candidate() {
        // 8x8 with offsets {0, 3}; diagonal 3 is all zero, diagonal 0 is all one.
        let mut l = layer(StructurePattern::diagonal([0, 3]), 8, 8, None, 0);
        let vals: Vec<f64> = l.weights().mask().positions().map(|(r, c)| if r == c { 1.0 } else { 0.0 }).collect();
        *l.weights_mut() = SparseLayer::new(l.weights().mask().clone(), vals).unwrap();
        let left: Vec<f64> = (0..8).map(|r| (r + 1) as f64).collect();
        let right: Vec<f64> = (0..8).map(|c| if c == 5 { 1.0 } else { 0.01 }).collect();
        let g = probe_grad(8, 8, left.clone(), right.clone(), 16);

        // Enumerate every inactive diagonal and score it directly.
        let score = |o: usize| (0..8).map(|r| (left[r] * right[(r + o) % 8]).abs()).sum::<f64>();
        let mut best = None;
        for o in (0..8).filter(|o| *o != 0 && *o != 3) {
            if best.is_none_or(|b| score(o) > score(b)) {
                best = Some(o);
            }
        }
        assert_eq!(best, Some(6));

        let out = prune_grow(&mut l, &g, 0.5, Growth::Rigl, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.swapped, 1);
        match l.weights().mask().descriptor() {
            StructurePattern::Diagonal { offsets, .. } => assert_eq!(offsets, &vec![0, 6]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(validate_mask(l.weights().mask()));
        assert_eq!(l.weights().mask().nnz(), 16);
        for ((r, c), v) in l.weights().mask().positions().zip(l.weights().values()) {
            assert_eq!(*v, if r == c { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn block_swap_prefers_high_gradient_block() {
        let mut l =
            layer(StructurePattern::Block { block_size: 2, active_blocks: vec![(0, 0), (1, 1)] }, 4, 4, None, 3);
        let vals: Vec<f64> = l.weights().mask().positions().map(|(r, _)| if r < 2 { 0.01 } else { 2.0 }).collect();
        *l.weights_mut() = SparseLayer::new(l.weights().mask().clone(), vals).unwrap();
        // gradient mass sits in block (1, 0)
        let g = probe_grad(4, 4, vec![0.0, 0.0, 1.0, 1.0], vec![1.0, 1.0, 0.0, 0.0], 8);
        prune_grow(&mut l, &g, 0.4, Growth::Rigl, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        match l.weights().mask().descriptor() {
            StructurePattern::Block { active_blocks, .. } => {
                assert_eq!(active_blocks, &vec![(1, 0), (1, 1)])
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(validate_mask(l.weights().mask()));
    }

    #[test]
    fn nm_swaps_only_when_gradient_wins() {
        let mut l = layer(StructurePattern::Nm { n_keep: 1, m_group: 2 }, 1, 4, None, 0);
        let positions: Vec<(usize, usize)> = l.weights().mask().positions().collect();
        let vals = vec![0.5; 2];
        *l.weights_mut() = SparseLayer::new(l.weights().mask().clone(), vals).unwrap();
        // Strong gradient everywhere: both groups swap to their inactive slot.
        let g = probe_grad(1, 4, vec![1.0], vec![1.0; 4], 2);
        prune_grow(&mut l, &g, 0.9, Growth::Rigl, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let after: Vec<(usize, usize)> = l.weights().mask().positions().collect();
        for ((_, a), (_, b)) in positions.iter().zip(&after) {
            assert_ne!(a, b);
            assert_eq!(a / 2, b / 2);
        }
        assert_eq!(l.weights().values(), &[0.0, 0.0]);
        // Weak gradient: nothing moves.
        let weak = probe_grad(1, 4, vec![1e-3], vec![1.0; 4], 2);
        *l.weights_mut() = SparseLayer::new(l.weights().mask().clone(), vec![0.5, 0.5]).unwrap();
        let snapshot = l.clone();
        let out = prune_grow(&mut l, &weak, 0.9, Growth::Rigl, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.swapped, 0);
        assert_eq!(l, snapshot);
    }

    #[test]
    fn unstructured_rigl_and_set() {
        for growth in [Growth::Rigl, Growth::Set] {
            let mut l = layer(StructurePattern::Unstructured { nnz: 6 }, 4, 4, None, 5);
            let g = probe_grad(4, 4, vec![1.0, 2.0, 3.0, 4.0], vec![4.0, 3.0, 2.0, 1.0], 6);
            let before: Vec<(usize, usize)> = l.weights().mask().positions().collect();
            let out = prune_grow(&mut l, &g, 0.5, growth, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            assert_eq!(out.swapped, 3);
            assert_eq!(l.weights().mask().nnz(), 6);
            assert!(validate_mask(l.weights().mask()));
            let grown: Vec<(usize, usize)> = l.weights().mask().positions().filter(|p| !before.contains(p)).collect();
            assert_eq!(grown.len(), 3);
        }
    }

    #[test]
    fn set_growth_rejected_for_structured() {
        let mut l = layer(StructurePattern::diagonal([0]), 4, 4, None, 0);
        let g = probe_grad(4, 4, vec![1.0; 4], vec![1.0; 4], 4);
        assert!(prune_grow(&mut l, &g, 0.5, Growth::Set, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn budget_conserved_over_random_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let patterns = [
            (StructurePattern::diagonal([0, 2, -3]), 8, 12),
            (StructurePattern::Diagonal { offsets: vec![0, 1, -2], wrap: false }, 6, 6),
            (StructurePattern::Block { block_size: 2, active_blocks: vec![(0, 1), (2, 0)] }, 6, 4),
            (StructurePattern::Nm { n_keep: 2, m_group: 4 }, 5, 8),
            (StructurePattern::Unstructured { nnz: 10 }, 5, 6),
        ];
        for i in 0..100 {
            let (p, r, c) = &patterns[i % patterns.len()];
            let l = layer(p.clone(), *r, *c, None, i as u64);
            let mut net = SmallNet::new(vec![l]).unwrap();
            let x: Vec<f64> = (0..*c).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (y, tape) = forward_train(&net, &x).unwrap();
            let g = backward(&net, &tape, &y).unwrap();
            let nnz = net.layers()[0].weights().mask().nnz();
            let f = rng.gen_range(0.0..0.99);
            prune_grow(&mut net.layers_mut()[0], &g.layers[0], f, Growth::Rigl, &mut rng).unwrap();
            assert_eq!(net.layers()[0].weights().mask().nnz(), nnz);
            assert!(validate_mask(net.layers()[0].weights().mask()));
        }
    }
}
