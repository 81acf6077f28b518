use std::fmt::Write;

use serde::{Deserialize, Serialize};

pub const TRAIN_REPORT_VERSION: u32 = 1;

/// Metrics after one epoch. Epoch 0 describes the network before training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub task_loss: f64,
    /// `sum_l P(M_l)`; hardened layers contribute zero.
    pub total_penalty: f64,
    pub layer_penalty: Vec<f64>,
    pub hardened_epoch: Vec<Option<usize>>,
    /// Identity distance of each hardened permutation.
    pub identity_distance: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub version: u32,
    pub steps: usize,
    pub mask_updates: usize,
    pub epochs: Vec<EpochRecord>,
    /// Task loss of the returned network, after any end-of-run hardening.
    pub final_task_loss: f64,
    pub hardened_step: Vec<Option<usize>>,
    pub active: Vec<usize>,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per epoch: `epoch, task_loss, total_penalty`, then per-layer
    /// penalty, hardened epoch and identity distance columns. Missing values
    /// are empty fields.
    pub fn to_csv(&self) -> String {
        let layers = self.hardened_step.len();
        let mut out = String::from("epoch,task_loss,total_penalty");
        for prefix in ["penalty", "hardened_epoch", "identity_distance"] {
            for l in 0..layers {
                write!(out, ",{prefix}_{l}").unwrap();
            }
        }
        out.push('\n');
        for e in &self.epochs {
            write!(out, "{},{},{}", e.epoch, e.task_loss, e.total_penalty).unwrap();
            for p in &e.layer_penalty {
                write!(out, ",{p}").unwrap();
            }
            for h in &e.hardened_epoch {
                out.push(',');
                if let Some(h) = h {
                    write!(out, "{h}").unwrap();
                }
            }
            for d in &e.identity_distance {
                out.push(',');
                if let Some(d) = d {
                    write!(out, "{d}").unwrap();
                }
            }
            out.push('\n');
        }
        out
    }
}
