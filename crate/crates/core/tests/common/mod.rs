//! Random networks and the finite-difference gradient check shared by the
//! integration tests.
#![allow(dead_code)]

use padst::matrix::Matrix;
use padst::netcore::{backward, forward_train, PALayer, PermSide, SmallNet};
use padst::patterns::{generate_mask, SparseLayer, StructurePattern};
use padst::permutation::{project_birkhoff, IndexMap, SoftPermutation};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-6;
/// Largest accepted relative error between analytic and numeric gradients.
pub const TOL: f64 = 1e-4;

pub fn random_pattern(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> StructurePattern {
    loop {
        let p = match rng.gen_range(0..4) {
            0 => {
                let span = rows.max(cols) as i64;
                let k = rng.gen_range(1..=3.min(span as usize));
                let mut offs: Vec<i64> = (0..span).collect();
                offs.shuffle(rng);
                StructurePattern::diagonal(offs[..k].to_vec())
            }
            1 => {
                let b = *[1, 2, 4].choose(rng).unwrap();
                if !rows.is_multiple_of(b) || !cols.is_multiple_of(b) {
                    continue;
                }
                let (br, bc) = (rows / b, cols / b);
                let mut all: Vec<(usize, usize)> = (0..br).flat_map(|r| (0..bc).map(move |c| (r, c))).collect();
                all.shuffle(rng);
                let k = rng.gen_range(1..=all.len().min(3));
                StructurePattern::Block { block_size: b, active_blocks: all[..k].to_vec() }
            }
            2 => {
                let m = *[2, 4].choose(rng).unwrap();
                if !cols.is_multiple_of(m) {
                    continue;
                }
                StructurePattern::Nm { n_keep: rng.gen_range(1..=m), m_group: m }
            }
            _ => StructurePattern::Unstructured { nnz: rng.gen_range(1..=rows * cols) },
        };
        return p;
    }
}

pub fn random_perm(n: usize, rng: &mut ChaCha8Rng) -> SoftPermutation<f64> {
    if rng.gen_bool(0.3) {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(rng);
        SoftPermutation::from_index_map(IndexMap::new(p).unwrap())
    } else {
        SoftPermutation::uniform_init(n, 0.5, rng)
    }
}

pub fn random_net(rng: &mut ChaCha8Rng) -> SmallNet<f64> {
    let depth = rng.gen_range(1..=3);
    let widths: Vec<usize> = (0..=depth).map(|_| *[2, 4, 6, 8, 12, 16].choose(rng).unwrap()).collect();
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let (cols, rows) = (w[0], w[1]);
            let mask = generate_mask(&random_pattern(rows, cols, rng), rows, cols, rng.gen()).unwrap();
            let weights = SparseLayer::random(mask, 1.0, rng);
            let side = if rng.gen_bool(0.5) { PermSide::Column } else { PermSide::Row };
            let n = if side == PermSide::Column { cols } else { rows };
            let bias = (i % 2 == 0).then(|| (0..rows).map(|_| rng.gen_range(-0.5..0.5)).collect());
            PALayer::new(weights, random_perm(n, rng), bias, side).unwrap()
        })
        .collect();
    SmallNet::new(layers).unwrap()
}

/// Scalar objective `sum_k c_k y_k + 0.5 * sum_k y_k^2` over a few samples.
pub fn objective(net: &SmallNet<f64>, xs: &[Vec<f64>], c: &[f64]) -> f64 {
    xs.iter()
        .map(|x| {
            let (y, _) = forward_train(net, x).unwrap();
            y.iter().zip(c).map(|(y, c)| c * y + 0.5 * y * y).sum::<f64>()
        })
        .sum()
}

/// All pre-activations stay clear of the ReLU kink under perturbation.
pub fn away_from_kinks(net: &SmallNet<f64>, xs: &[Vec<f64>]) -> bool {
    xs.iter().all(|x| {
        let (_, tape) = forward_train(net, x).unwrap();
        let hidden = tape.layers.len() - 1;
        tape.layers[..hidden].iter().all(|l| l.preact.iter().all(|z| z.abs() > 1e-3))
    })
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-2)
}

pub fn with_perm_entry(net: &SmallNet<f64>, layer: usize, idx: usize, delta: f64) -> SmallNet<f64> {
    let mut out = net.clone();
    let p = out.layers()[layer].perm().matrix();
    let mut data = p.as_slice().to_vec();
    data[idx] += delta;
    let m = Matrix::from_vec(p.rows(), p.cols(), data).unwrap();
    // Zero sweeps keeps the perturbed entries as they are.
    *out.layers_mut()[layer].perm_mut() = project_birkhoff(&m, 0, 1e-8).unwrap();
    out
}

/// Worst relative error between the reverse pass and central differences over
/// `nets` random networks with weight, bias and soft-permutation parameters.
pub fn gradient_suite(seed: u64, nets: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < nets {
        let net = random_net(&mut rng);
        let xs: Vec<Vec<f64>> =
            (0..3).map(|_| (0..net.input_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        if !away_from_kinks(&net, &xs) {
            continue;
        }
        let c: Vec<f64> = (0..net.output_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut bundle = None;
        for x in &xs {
            let (y, tape) = forward_train(&net, x).unwrap();
            let d_out: Vec<f64> = y.iter().zip(&c).map(|(y, c)| c + y).collect();
            let g = backward(&net, &tape, &d_out).unwrap();
            match &mut bundle {
                None => bundle = Some(g),
                Some(b) => padst::netcore::GradientBundle::accumulate(b, g),
            }
        }
        let bundle = bundle.unwrap();

        for (li, (layer, g)) in net.layers().iter().zip(&bundle.layers).enumerate() {
            for k in 0..layer.weights().values().len() {
                let mut plus = net.clone();
                plus.layers_mut()[li].weights_mut().values_mut()[k] += H;
                let mut minus = net.clone();
                minus.layers_mut()[li].weights_mut().values_mut()[k] -= H;
                let fd = (objective(&plus, &xs, &c) - objective(&minus, &xs, &c)) / (2.0 * H);
                worst = worst.max(rel_err(g.d_weights[k], fd));
                // probes reproduce active-position gradients
                let (r, col) = layer.weights().mask().positions().nth(k).unwrap();
                assert!((g.weight_grad_at(r, col) - g.d_weights[k]).abs() < 1e-9);
            }
            if let Some(d_bias) = &g.d_bias {
                for k in 0..d_bias.len() {
                    let mut plus = net.clone();
                    plus.layers_mut()[li].bias_mut().unwrap()[k] += H;
                    let mut minus = net.clone();
                    minus.layers_mut()[li].bias_mut().unwrap()[k] -= H;
                    let fd = (objective(&plus, &xs, &c) - objective(&minus, &xs, &c)) / (2.0 * H);
                    worst = worst.max(rel_err(d_bias[k], fd));
                }
            }
            match &g.d_perm {
                Some(d_perm) => {
                    for k in 0..d_perm.as_slice().len() {
                        let plus = with_perm_entry(&net, li, k, H);
                        let minus = with_perm_entry(&net, li, k, -H);
                        let fd = (objective(&plus, &xs, &c) - objective(&minus, &xs, &c)) / (2.0 * H);
                        worst = worst.max(rel_err(d_perm.as_slice()[k], fd));
                    }
                }
                None => assert!(layer.perm().is_hardened()),
            }
        }
        checked += 1;
    }
    worst
}

/// Random net whose permutations are all hardened.
pub fn random_hardened_net(rng: &mut ChaCha8Rng) -> SmallNet<f64> {
    let mut net = random_net(rng);
    for layer in net.layers_mut() {
        let n = layer.perm().n();
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(rng);
        *layer.perm_mut() = SoftPermutation::from_index_map(IndexMap::new(p).unwrap());
    }
    net
}
