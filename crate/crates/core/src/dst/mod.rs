//! Sparse training: SGD on task loss plus the permutation penalty, structure
//! preserving prune/grow updates and per-layer permutation hardening.

mod prune_grow;
mod report;
mod train;

pub use prune_grow::{prune_grow, Growth, PruneGrowOutcome};
pub use report::{EpochRecord, TrainReport, TRAIN_REPORT_VERSION};
pub use train::{evaluate, train, train_observed, StepEvent};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::PermSide;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    /// Weight of the permutation penalty in the total loss.
    #[serde(default = "default_lambda")]
    pub lambda_perm: f64,
    pub epochs: usize,
    /// Optimizer steps between mask updates.
    pub dst_interval: usize,
    pub prune_fraction_initial: f64,
    /// Penalty level at or below which a layer's permutation is hardened.
    #[serde(default = "default_threshold")]
    pub harden_threshold: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub perm_side: PermSide,
    /// Learning rate for permutation entries; defaults to `lr`.
    #[serde(default)]
    pub lr_perm: Option<f64>,
    /// Samples per optimizer step; 0 means full batch.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Heavy-ball momentum on weights and biases; 0 is plain SGD.
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub growth: Growth,
    /// Decode any permutation still soft after the last epoch.
    #[serde(default = "default_true")]
    pub harden_at_end: bool,
}

fn default_lambda() -> f64 {
    0.1
}

fn default_threshold() -> f64 {
    0.22
}

fn default_batch() -> usize {
    32
}

fn default_true() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            lambda_perm: default_lambda(),
            epochs: 50,
            dst_interval: 10,
            prune_fraction_initial: 0.3,
            harden_threshold: default_threshold(),
            seed: 0,
            perm_side: PermSide::Column,
            lr_perm: None,
            batch_size: default_batch(),
            momentum: 0.0,
            growth: Growth::Rigl,
            harden_at_end: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if let Some(lp) = self.lr_perm {
            if !(lp >= 0.0 && lp.is_finite()) {
                return bad(format!("lr_perm must be nonnegative, got {lp}"));
            }
        }
        if !(self.lambda_perm >= 0.0 && self.lambda_perm.is_finite()) {
            return bad(format!("lambda_perm must be nonnegative, got {}", self.lambda_perm));
        }
        if !(0.0..1.0).contains(&self.prune_fraction_initial) {
            return bad(format!("prune_fraction_initial must lie in [0, 1), got {}", self.prune_fraction_initial));
        }
        if self.dst_interval == 0 {
            return bad("dst_interval must be at least 1".into());
        }
        if !(self.harden_threshold >= 0.0) {
            return bad(format!("harden_threshold must be nonnegative, got {}", self.harden_threshold));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        Ok(())
    }

    pub fn perm_lr(&self) -> f64 {
        self.lr_perm.unwrap_or(self.lr)
    }
}

/// Cosine decay `initial / 2 * (1 + cos(pi * step / total_steps))`.
pub fn prune_fraction_schedule(step: usize, total_steps: usize, initial: f64) -> f64 {
    if total_steps == 0 {
        return initial;
    }
    let t = step.min(total_steps) as f64 / total_steps as f64;
    initial / 2.0 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Per-layer training state.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerState {
    pub active: usize,
    pub hardened: bool,
    pub hardened_step: Option<usize>,
    pub hardened_epoch: Option<usize>,
    pub penalty_history: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DstState {
    pub step: usize,
    pub layers: Vec<LayerState>,
}

/// True once a layer is hardened or its latest penalty is at most `threshold`.
pub fn harden_check(state: &DstState, layer_idx: usize, threshold: f64) -> bool {
    let layer = &state.layers[layer_idx];
    layer.hardened || layer.penalty_history.last().is_some_and(|&p| p <= threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        assert_eq!(prune_fraction_schedule(0, 100, 0.3), 0.3);
        assert!(prune_fraction_schedule(100, 100, 0.3).abs() < 1e-15);
        assert!((prune_fraction_schedule(50, 100, 0.3) - 0.15).abs() < 1e-15);
        assert!(prune_fraction_schedule(25, 100, 0.3) > prune_fraction_schedule(75, 100, 0.3));
    }

    fn state_with(history: Vec<f64>, hardened: bool) -> DstState {
        DstState { step: 0, layers: vec![LayerState { penalty_history: history, hardened, ..Default::default() }] }
    }

    #[test]
    fn harden_check_threshold() {
        assert!(harden_check(&state_with(vec![1.0, 0.21], false), 0, 0.22));
        assert!(!harden_check(&state_with(vec![0.1, 0.23], false), 0, 0.22));
        assert!(harden_check(&state_with(vec![0.0], true), 0, 0.22));
        assert!(harden_check(&state_with(vec![], true), 0, 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { lr: 0.0, ..Default::default() },
            TrainConfig { prune_fraction_initial: 1.0, ..Default::default() },
            TrainConfig { dst_interval: 0, ..Default::default() },
            TrainConfig { harden_threshold: -1.0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn config_defaults_from_json() {
        let cfg: TrainConfig =
            serde_json::from_str(r#"{"lr": 0.1, "epochs": 3, "dst_interval": 5, "prune_fraction_initial": 0.2}"#)
                .unwrap();
        assert_eq!(cfg.lambda_perm, 0.1);
        assert_eq!(cfg.harden_threshold, 0.22);
        assert_eq!(cfg.perm_lr(), 0.1);
        assert!(cfg.harden_at_end);
    }
}
