use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::prune_grow::prune_grow;
use super::report::{EpochRecord, TrainReport, TRAIN_REPORT_VERSION};
use super::{harden_check, prune_fraction_schedule, DstState, LayerState, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::netcore::{backward, forward_train, GradientBundle, SmallNet};
use crate::permutation::{harden, identity_distance, perm_penalty, perm_penalty_grad};
use crate::Scalar;

/// Snapshot handed to an observer after every optimizer step.
pub struct StepEvent<'a, T> {
    pub step: usize,
    pub epoch: usize,
    pub net: &'a SmallNet<T>,
    pub state: &'a DstState,
    /// Whether prune/grow ran after this step.
    pub mask_updated: bool,
    pub task_loss: f64,
}

/// Trains `net` on mean squared error plus `lambda_perm * sum_l P(M_l)`.
pub fn train<T: Scalar>(net: SmallNet<T>, data: &Dataset<T>, cfg: &TrainConfig) -> Result<(SmallNet<T>, TrainReport)> {
    train_observed(net, data, cfg, |_| {})
}

/// [`train`] with a callback after every step.
///
/// Each step: minibatch gradients, SGD on weights and biases, a projected
/// step on every soft permutation, then (every `dst_interval` steps, except
/// after the last) prune/grow on each layer with the cosine-decayed
/// fraction. Finally each soft layer whose penalty has reached
/// `harden_threshold` is decoded and frozen.
pub fn train_observed<T: Scalar>(
    mut net: SmallNet<T>,
    data: &Dataset<T>,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&StepEvent<'_, T>),
) -> Result<(SmallNet<T>, TrainReport)> {
    cfg.validate()?;
    if data.input_dim() != net.input_dim() || data.target_dim() != net.output_dim() {
        return Err(Error::Dimension(format!(
            "net maps {} -> {}, data has {} -> {}",
            net.input_dim(),
            net.output_dim(),
            data.input_dim(),
            data.target_dim()
        )));
    }
    let n_layers = net.layers().len();
    let batch = if cfg.batch_size == 0 { data.len() } else { cfg.batch_size.min(data.len()) };
    let batches_per_epoch = data.len().div_ceil(batch);
    let total_steps = cfg.epochs * batches_per_epoch;
    let (lr, lr_perm, lambda, mu) =
        (T::lit(cfg.lr), T::lit(cfg.perm_lr()), T::lit(cfg.lambda_perm), T::lit(cfg.momentum));

    let mut state = DstState {
        step: 0,
        layers: net
            .layers()
            .iter()
            .map(|l| {
                let hardened = l.perm().is_hardened();
                LayerState {
                    active: l.weights().mask().nnz(),
                    hardened,
                    hardened_step: hardened.then_some(0),
                    hardened_epoch: hardened.then_some(0),
                    penalty_history: Vec::new(),
                }
            })
            .collect(),
    };
    let mut velocity: Vec<(Vec<T>, Vec<T>)> =
        net.layers().iter().map(|l| (vec![T::zero(); l.weights().mask().nnz()], vec![T::zero(); l.rows()])).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epochs = vec![epoch_record(&net, data, &state, 0).map_err(|e| diverged(e, 0))?];
    let mut mask_updates = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let step = state.step;
            let (task_loss, grads) = batch_gradients(&net, data, chunk).map_err(|e| diverged(e, step))?;
            let mut total = task_loss;
            let mut perm_grads: Vec<Option<Matrix<T>>> = Vec::with_capacity(n_layers);
            for (layer, g) in net.layers().iter().zip(&grads.layers) {
                match &g.d_perm {
                    Some(d_perm) if !layer.perm().is_hardened() => {
                        total += cfg.lambda_perm * perm_penalty(layer.perm()).value.to_f64_lossy();
                        let pg = perm_penalty_grad(layer.perm())?;
                        perm_grads.push(Some(Matrix::from_fn(d_perm.rows(), d_perm.cols(), |i, j| {
                            d_perm[(i, j)] + lambda * pg[(i, j)]
                        })));
                    }
                    _ => perm_grads.push(None),
                }
            }
            if !total.is_finite() {
                return Err(Error::Diverged { step });
            }

            for (((layer, g), pg), (vw, vb)) in
                net.layers_mut().iter_mut().zip(&grads.layers).zip(&perm_grads).zip(&mut velocity)
            {
                sgd(layer.weights_mut().values_mut(), &g.d_weights, vw, lr, mu);
                if let (Some(b), Some(db)) = (layer.bias_mut(), &g.d_bias) {
                    sgd(b, db, vb, lr, mu);
                }
                if let Some(pg) = pg {
                    layer.perm_mut().step(pg, lr_perm).map_err(|e| diverged(e, step))?;
                }
            }
            state.step += 1;

            let mask_updated = state.step.is_multiple_of(cfg.dst_interval) && state.step < total_steps;
            if mask_updated {
                let fraction = prune_fraction_schedule(state.step, total_steps, cfg.prune_fraction_initial);
                let step_seed = state.step as u64;
                let outcomes: Vec<Result<_>> = net
                    .layers_mut()
                    .par_iter_mut()
                    .zip(grads.layers.par_iter())
                    .enumerate()
                    .map(|(i, (layer, g))| {
                        let mut layer_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                        layer_rng.set_stream(step_seed * n_layers as u64 + i as u64);
                        prune_grow(layer, g, fraction, cfg.growth, &mut layer_rng)
                    })
                    .collect();
                for (i, outcome) in outcomes.into_iter().enumerate() {
                    if outcome?.swapped > 0 {
                        let nnz = net.layers()[i].weights().mask().nnz();
                        velocity[i].0 = vec![T::zero(); nnz];
                    }
                }
                mask_updates += 1;
            }

            for (i, layer) in net.layers_mut().iter_mut().enumerate() {
                let penalty =
                    if layer.perm().is_hardened() { 0.0 } else { perm_penalty(layer.perm()).value.to_f64_lossy() };
                state.layers[i].penalty_history.push(penalty);
                if !state.layers[i].hardened && harden_check(&state, i, cfg.harden_threshold) {
                    *layer.perm_mut() = harden(layer.perm());
                    let ls = &mut state.layers[i];
                    ls.hardened = true;
                    ls.hardened_step = Some(state.step);
                    ls.hardened_epoch = Some(epoch);
                }
            }
            observer(&StepEvent { step: state.step, epoch, net: &net, state: &state, mask_updated, task_loss });
        }
        epochs.push(epoch_record(&net, data, &state, epoch).map_err(|e| diverged(e, state.step))?);
    }

    if cfg.harden_at_end {
        for (i, layer) in net.layers_mut().iter_mut().enumerate() {
            if !layer.perm().is_hardened() {
                *layer.perm_mut() = harden(layer.perm());
                let ls = &mut state.layers[i];
                ls.hardened = true;
                ls.hardened_step = Some(state.step);
                ls.hardened_epoch = Some(cfg.epochs);
            }
        }
    }
    let final_task_loss = evaluate(&net, data).map_err(|e| diverged(e, state.step))?;
    let report = TrainReport {
        version: TRAIN_REPORT_VERSION,
        steps: state.step,
        mask_updates,
        epochs,
        final_task_loss,
        hardened_step: state.layers.iter().map(|l| l.hardened_step).collect(),
        active: net.layers().iter().map(|l| l.weights().mask().nnz()).collect(),
    };
    Ok((net, report))
}

/// Mean squared error over all samples and outputs.
pub fn evaluate<T: Scalar>(net: &SmallNet<T>, data: &Dataset<T>) -> Result<f64> {
    let mut sum = 0.0;
    for (x, t) in data.inputs().iter().zip(data.targets()) {
        let (y, _) = forward_train(net, x)?;
        sum += y.iter().zip(t).map(|(&y, &t)| (y - t).to_f64_lossy().powi(2)).sum::<f64>();
    }
    let loss = sum / (data.len() * data.target_dim()) as f64;
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFinite { layer: net.layers().len() - 1 })
    }
}

fn batch_gradients<T: Scalar>(net: &SmallNet<T>, data: &Dataset<T>, idx: &[usize]) -> Result<(f64, GradientBundle<T>)> {
    let scale = T::lit(2.0 / (idx.len() * data.target_dim()) as f64);
    let mut sum = 0.0;
    let mut bundle: Option<GradientBundle<T>> = None;
    for &i in idx {
        let (y, tape) = forward_train(net, &data.inputs()[i])?;
        let diff: Vec<T> = y.iter().zip(&data.targets()[i]).map(|(&y, &t)| y - t).collect();
        sum += diff.iter().map(|d| d.to_f64_lossy().powi(2)).sum::<f64>();
        let d_out: Vec<T> = diff.iter().map(|&d| d * scale).collect();
        let g = backward(net, &tape, &d_out)?;
        match &mut bundle {
            Some(b) => b.accumulate(g),
            None => bundle = Some(g),
        }
    }
    let loss = sum / (idx.len() * data.target_dim()) as f64;
    Ok((loss, bundle.expect("nonempty batch")))
}

fn sgd<T: Scalar>(w: &mut [T], g: &[T], v: &mut [T], lr: T, mu: T) {
    if mu == T::zero() {
        w.iter_mut().zip(g).for_each(|(w, &g)| *w = *w - lr * g);
    } else {
        for ((w, &g), v) in w.iter_mut().zip(g).zip(v.iter_mut()) {
            *v = mu * *v + g;
            *w = *w - lr * *v;
        }
    }
}

fn diverged(e: Error, step: usize) -> Error {
    match e {
        Error::NonFinite { .. } | Error::Domain(_) | Error::Degenerate(_) => Error::Diverged { step },
        other => other,
    }
}

fn epoch_record<T: Scalar>(
    net: &SmallNet<T>,
    data: &Dataset<T>,
    state: &DstState,
    epoch: usize,
) -> Result<EpochRecord> {
    let layer_penalty: Vec<f64> = net
        .layers()
        .iter()
        .map(|l| if l.perm().is_hardened() { 0.0 } else { perm_penalty(l.perm()).value.to_f64_lossy() })
        .collect();
    Ok(EpochRecord {
        epoch,
        task_loss: evaluate(net, data)?,
        total_penalty: layer_penalty.iter().sum(),
        layer_penalty,
        hardened_epoch: state.layers.iter().map(|l| l.hardened_epoch).collect(),
        identity_distance: net
            .layers()
            .iter()
            .map(|l| identity_distance(l.perm()).ok().map(|d| d.to_f64_lossy()))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{dense_teacher, permuted_diag};
    use crate::experiment::{build_net, ModelSpec, PermMode, StructureSpec};
    use crate::netcore::PermSide;
    use crate::permutation::IndexMap;

    fn model(structure: StructureSpec, perm: PermMode, density: f64) -> ModelSpec {
        ModelSpec {
            widths: vec![8, 8, 8],
            structure,
            density,
            perm,
            perm_noise: 0.01,
            bias: true,
            hidden_bias: 0.0,
            init: Default::default(),
        }
    }

    fn cfg() -> TrainConfig {
        TrainConfig { lr: 0.05, epochs: 5, dst_interval: 4, batch_size: 16, ..Default::default() }
    }

    #[test]
    fn loss_decreases_and_budget_holds() {
        let (data, _) = permuted_diag::<f64>(8, 2, 64, 0.0, 1).unwrap();
        let net = build_net(&model(StructureSpec::Diagonal, PermMode::Learned, 0.25), PermSide::Column, 1).unwrap();
        let before: Vec<usize> = net.layers().iter().map(|l| l.weights().mask().nnz()).collect();
        let mut updates = 0;
        let (net, report) = train_observed(net, &data, &cfg(), |ev| {
            if ev.mask_updated {
                updates += 1;
            }
            for (l, &n) in ev.net.layers().iter().zip(&before) {
                assert_eq!(l.weights().mask().nnz(), n);
            }
        })
        .unwrap();
        assert_eq!(updates, report.mask_updates);
        assert!(report.mask_updates > 0);
        assert!(report.epochs.last().unwrap().task_loss < report.epochs[0].task_loss);
        assert!(net.soft_layers().is_empty());
        assert_eq!(report.epochs.len(), 6);
        assert_eq!(report.steps, 20);
    }

    #[test]
    fn divergence_reports_step() {
        let data = dense_teacher::<f64>(&[8, 8, 8], 32, 0.0, 2).unwrap();
        let net = build_net(&model(StructureSpec::Dense, PermMode::Identity, 1.0), PermSide::Column, 2).unwrap();
        let cfg = TrainConfig { lr: 1e6, ..cfg() };
        assert!(matches!(train(net, &data, &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn zero_lambda_without_end_hardening_stays_soft() {
        let data = dense_teacher::<f64>(&[8, 8, 8], 32, 0.0, 3).unwrap();
        let net = build_net(&model(StructureSpec::Diagonal, PermMode::Learned, 0.25), PermSide::Column, 3).unwrap();
        let cfg = TrainConfig { lambda_perm: 0.0, harden_at_end: false, ..cfg() };
        let (net, report) = train(net, &data, &cfg).unwrap();
        assert_eq!(net.soft_layers(), vec![0, 1]);
        assert_eq!(report.hardened_step, vec![None, None]);
    }

    #[test]
    fn identity_perms_stay_bit_identical() {
        let data = dense_teacher::<f64>(&[8, 8, 8], 32, 0.0, 4).unwrap();
        let net = build_net(&model(StructureSpec::Dense, PermMode::Identity, 1.0), PermSide::Row, 4).unwrap();
        let cfg = TrainConfig { lambda_perm: 10.0, ..cfg() };
        let (net, report) = train(net, &data, &cfg).unwrap();
        for l in net.layers() {
            assert_eq!(l.perm().index_map(), Some(&IndexMap::identity(8)));
        }
        assert!(report.epochs.iter().all(|e| e.identity_distance == vec![Some(1.0), Some(1.0)]));
        assert_eq!(report.hardened_step, vec![Some(0), Some(0)]);
    }

    #[test]
    fn training_is_deterministic() {
        let (data, _) = permuted_diag::<f64>(8, 2, 48, 0.05, 5).unwrap();
        let run = || {
            let net =
                build_net(&model(StructureSpec::Unstructured, PermMode::Learned, 0.25), PermSide::Column, 5).unwrap();
            train(net, &data, &cfg()).unwrap()
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn rejects_mismatched_data() {
        let data = dense_teacher::<f64>(&[4, 8], 8, 0.0, 1).unwrap();
        let net = build_net(&model(StructureSpec::Dense, PermMode::Identity, 1.0), PermSide::Column, 1).unwrap();
        assert!(matches!(train(net, &data, &cfg()), Err(Error::Dimension(_))));
    }
}
