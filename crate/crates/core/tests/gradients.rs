//! Reverse pass against central finite differences.

mod common;

use common::{gradient_suite, random_net, TOL};
use padst::netcore::{backward, forward_train, PALayer, SmallNet};
use padst::patterns::{generate_mask, SparseLayer, StructurePattern};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn analytic_gradients_match_central_differences() {
    let worst = gradient_suite(2024, 20);
    assert!(worst <= TOL, "max relative error {worst:e}");
}

#[test]
fn probes_give_gradients_at_inactive_positions() {
    // Densify a layer (all other entries zero) and compare the dense gradient
    // with the probe reconstruction at every position.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let net = random_net(&mut rng);
        let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (y, tape) = forward_train(&net, &x).unwrap();
        let g = backward(&net, &tape, &y).unwrap();

        let dense_layers = net
            .layers()
            .iter()
            .map(|l| {
                let (rows, cols) = (l.rows(), l.cols());
                let mask = generate_mask(&StructurePattern::Unstructured { nnz: rows * cols }, rows, cols, 0).unwrap();
                let values = mask.positions().map(|(r, c)| l.weights().get(r, c)).collect();
                PALayer::new(
                    SparseLayer::new(mask, values).unwrap(),
                    l.perm().clone(),
                    l.bias().map(|b| b.to_vec()),
                    l.side(),
                )
                .unwrap()
            })
            .collect();
        let dense = SmallNet::new(dense_layers).unwrap();
        let (yd, tape_d) = forward_train(&dense, &x).unwrap();
        assert_eq!(y, yd);
        let gd = backward(&dense, &tape_d, &yd).unwrap();
        for (sparse, full) in g.layers.iter().zip(&gd.layers) {
            let rows = full.probes[0].0.len();
            let cols = full.probes[0].1.len();
            for r in 0..rows {
                for c in 0..cols {
                    let k = r * cols + c;
                    assert!((sparse.weight_grad_at(r, c) - full.d_weights[k]).abs() < 1e-12);
                }
            }
        }
    }
}
