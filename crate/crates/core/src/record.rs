//! Per-run records shared by training and the experiment harness.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::losses::LossSpec;

/// Scalars sampled during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepScalars {
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
    pub grad_norm: f64,
    /// Mean conditional entropy over the training contexts.
    pub entropy: f64,
    pub param_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: String,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub spec: LossSpec,
    pub status: RunStatus,
    /// Scalars every `log_every` optimizer steps.
    pub steps: Vec<StepScalars>,
    /// Scalars at the end of each epoch.
    pub epochs: Vec<StepScalars>,
    /// Shuffled example order for each epoch.
    pub batch_order: Vec<Vec<u32>>,
    pub final_metrics: BTreeMap<String, f64>,
    /// pass@k per k, when the task has a verifier.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub pass_at_k: BTreeMap<usize, f64>,
    pub bleu_smoothing: String,
    pub wall_time_secs: f64,
    pub artifacts: Vec<String>,
}

pub const BLEU_SMOOTHING: &str = "add-epsilon 1e-9 on zero n-gram precisions";

impl RunRecord {
    pub fn new(spec: LossSpec, seed: u64) -> Self {
        Self {
            cell: String::new(),
            config_hash: String::new(),
            version: version_string(),
            seed,
            spec,
            status: RunStatus::Ok,
            steps: Vec::new(),
            epochs: Vec::new(),
            batch_order: Vec::new(),
            final_metrics: BTreeMap::new(),
            pass_at_k: BTreeMap::new(),
            bleu_smoothing: BLEU_SMOOTHING.to_string(),
            wall_time_secs: 0.0,
            artifacts: Vec::new(),
        }
    }

    pub fn failed(cell: &str, spec: LossSpec, seed: u64, error: String) -> Self {
        Self {
            cell: cell.to_string(),
            status: RunStatus::Failed { error },
            ..Self::new(spec, seed)
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    /// The record with wall-clock fields cleared, for reproducibility checks.
    pub fn scalars_only(&self) -> Self {
        Self {
            wall_time_secs: 0.0,
            ..self.clone()
        }
    }
}

pub fn version_string() -> String {
    format!("gemlab-{}", env!("CARGO_PKG_VERSION"))
}
