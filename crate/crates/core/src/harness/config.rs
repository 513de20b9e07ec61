//! Experiment configuration: a single JSON document, unknown fields rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GemError, Result};
use crate::losses::LossSpec;
use crate::models::OptimizerConfig;
use crate::sequential::{DecodeConfig, Schedule, DEFAULT_WINDOW};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub task: TaskSpec,
    pub grid: Vec<GridCell>,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub schedule: Schedule,
    pub epochs: usize,
    pub batch_size: usize,
    /// When set, cells train on the exact truth distributions until
    /// convergence instead of on sampled mini-batches.
    #[serde(default)]
    pub exact: Option<ExactSettings>,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_log_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCell {
    /// Defaults to the loss label, e.g. `gem_b0.7`.
    #[serde(default)]
    pub name: Option<String>,
    pub loss: LossSpec,
}

impl GridCell {
    pub fn new(loss: LossSpec) -> Self {
        Self { name: None, loss }
    }

    pub fn cell_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.loss.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactSettings {
    pub max_steps: usize,
    pub grad_tol: f64,
}

impl Default for ExactSettings {
    fn default() -> Self {
        Self {
            max_steps: 1_000_000,
            grad_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub vocab_size: usize,
    pub n_contexts: usize,
    pub prompt_len: usize,
    pub response_len: usize,
    pub samples_per_context: usize,
    pub truth: TruthFamily,
    /// Context window used for both the truth process and the model.
    #[serde(default = "default_window")]
    pub window: Option<usize>,
    /// Optional cross-entropy pre-training on clean data before fine-tuning.
    #[serde(default)]
    pub pretrain: Option<PretrainSpec>,
}

fn default_window() -> Option<usize> {
    Some(DEFAULT_WINDOW)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthFamily {
    /// Every context draws its next-token distribution from a symmetric
    /// Dirichlet with concentration `alpha`.
    Dirichlet { alpha: f64 },
    /// Each prompt has `n_answers` distinct correct responses, mixed with
    /// Dirichlet(`answer_alpha`) weights; with probability `noise` a sample is
    /// a uniformly random (usually wrong) response instead.
    MultiAnswer {
        n_answers: usize,
        answer_alpha: f64,
        noise: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainSpec {
    pub samples_per_context: usize,
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardId {
    /// 1 when the response is one of the prompt's correct answers, else 0.
    Verifier,
    /// Log-likelihood of the response under the ground-truth process.
    TruthLoglik,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Prompts used for sampling-based metrics (first N contexts).
    pub n_prompts: usize,
    /// Samples per prompt for diversity, pass@k and best-of-n.
    pub n_samples: usize,
    pub ks: Vec<usize>,
    pub decode: DecodeConfig,
    pub reward: Option<RewardId>,
    pub ngram_n: usize,
    pub bleu_max_n: usize,
    /// Fresh sequences per context for held-out perplexity.
    pub heldout_per_context: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_prompts: 8,
            n_samples: 32,
            ks: vec![1, 2, 4, 8, 16, 32],
            decode: DecodeConfig::new(8, 0),
            reward: None,
            ngram_n: 2,
            bleu_max_n: 4,
            heldout_per_context: 4,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| GemError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GemError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON encoding, with
    /// the output directory left out so that relocating a run keeps its hash.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let text = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn cell_names(&self) -> Vec<String> {
        self.grid.iter().map(GridCell::cell_name).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(GemError::Config(m));
        let t = &self.task;
        if t.vocab_size < 3 {
            return err(format!("vocab_size must be >= 3, got {}", t.vocab_size));
        }
        if t.n_contexts == 0 || t.response_len == 0 {
            return err("n_contexts and response_len must be positive".into());
        }
        let symbols = (t.vocab_size - 1) as f64;
        if (t.n_contexts as f64) > symbols.powi(t.prompt_len as i32) {
            return err(format!(
                "{} contexts do not fit in prompts of length {} over {} symbols",
                t.n_contexts, t.prompt_len, symbols
            ));
        }
        if t.window == Some(0) {
            return err("window must be positive".into());
        }
        match t.truth {
            TruthFamily::Dirichlet { alpha } => {
                if !(alpha > 0.0) {
                    return err(format!("dirichlet alpha must be positive, got {alpha}"));
                }
            }
            TruthFamily::MultiAnswer {
                n_answers,
                answer_alpha,
                noise,
            } => {
                let space = symbols.powi(t.response_len as i32);
                if n_answers == 0 || n_answers as f64 > space {
                    return err(format!("cannot place {n_answers} distinct answers"));
                }
                if !(answer_alpha > 0.0) || !(0.0..1.0).contains(&noise) {
                    return err("answer_alpha must be > 0 and noise in [0, 1)".into());
                }
                if let Some(w) = t.window {
                    if w < t.prompt_len + t.response_len - 1 {
                        return err(
                            "multi_answer tasks need a window covering prompt and response".into(),
                        );
                    }
                }
            }
        }
        if let Some(p) = &t.pretrain {
            p.optimizer.validate()?;
            if p.batch_size == 0 {
                return err("pretrain batch_size must be positive".into());
            }
        }
        if self.grid.is_empty() {
            return err("grid must contain at least one cell".into());
        }
        let mut names = self.cell_names();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return err("grid cell names must be unique".into());
        }
        for cell in &self.grid {
            cell.loss
                .validate()
                .map_err(|e| GemError::Config(format!("cell {}: {e}", cell.cell_name())))?;
        }
        self.optimizer.validate()?;
        if self.batch_size == 0 || self.log_every == 0 {
            return err("batch_size and log_every must be positive".into());
        }
        let e = &self.eval;
        e.decode.validate()?;
        if e.n_samples < 2 && e.n_prompts > 0 {
            return err("eval.n_samples must be >= 2".into());
        }
        if e.ks.iter().any(|k| *k == 0 || *k > e.n_samples) {
            return err("every k must lie in [1, n_samples]".into());
        }
        if e.ngram_n == 0 || e.bleu_max_n == 0 {
            return err("ngram_n and bleu_max_n must be positive".into());
        }
        if e.reward == Some(RewardId::Verifier)
            && !matches!(t.truth, TruthFamily::MultiAnswer { .. })
        {
            return err("the verifier reward needs a multi_answer task".into());
        }
        if e.reward == Some(RewardId::TruthLoglik) && t.window.is_some_and(|w| w < t.prompt_len) {
            return err("truth_loglik needs a window covering the prompt".into());
        }
        Ok(())
    }
}
