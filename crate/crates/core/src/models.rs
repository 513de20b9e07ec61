//! Tabular conditional models, optimizers and the closed-form equilibrium.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dist::{softmax, LogitVector, ProbVector};
use crate::error::{check_index, GemError, Result};
use crate::losses::{expected_loss_and_ascent, loss_and_ascent, LossSpec};
use crate::sequential::ContextKey;

pub const MODEL_FORMAT_VERSION: u32 = 1;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// What a training example asks the model to match at one context.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// A single observed next token.
    Label(usize),
    /// A full distribution; the loss is the expectation over it.
    Expected(ProbVector),
}

/// A context-indexed table of logit rows. Rows that were never written read
/// as all-zero logits, i.e. the uniform distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularModel {
    vocab_size: usize,
    table: BTreeMap<ContextKey, Vec<f64>>,
    init_snapshot: BTreeMap<ContextKey, Vec<f64>>,
}

impl TabularModel {
    pub fn new(vocab_size: usize) -> Result<Self> {
        if vocab_size < 2 {
            return Err(GemError::InvalidInput(format!(
                "vocabulary size must be at least 2, got {vocab_size}"
            )));
        }
        Ok(Self {
            vocab_size,
            table: BTreeMap::new(),
            init_snapshot: BTreeMap::new(),
        })
    }

    /// A model whose starting point (and distance reference) is `rows`.
    pub fn from_rows(vocab_size: usize, rows: BTreeMap<ContextKey, LogitVector>) -> Result<Self> {
        let mut model = Self::new(vocab_size)?;
        for (key, row) in rows {
            model.check_row(&row)?;
            model.table.insert(key, row.into_vec());
        }
        model.init_snapshot = model.table.clone();
        Ok(model)
    }

    fn check_row(&self, row: &LogitVector) -> Result<()> {
        if row.len() != self.vocab_size {
            return Err(GemError::InvalidInput(format!(
                "row of length {} in a model over {} tokens",
                row.len(),
                self.vocab_size
            )));
        }
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Logits at `ctx`, materializing a zero row for unseen contexts.
    pub fn logits(&mut self, ctx: &ContextKey) -> LogitVector {
        let k = self.vocab_size;
        let row = self.table.entry(ctx.clone()).or_insert_with(|| vec![0.0; k]);
        LogitVector::new(row.clone()).expect("model rows stay finite")
    }

    /// Read-only lookup; unseen contexts give zeros without being stored.
    pub fn row(&self, ctx: &ContextKey) -> LogitVector {
        let values = self
            .table
            .get(ctx)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.vocab_size]);
        LogitVector::new(values).expect("model rows stay finite")
    }

    pub fn probs(&self, ctx: &ContextKey) -> ProbVector {
        softmax(&self.row(ctx))
    }

    pub fn set_row(&mut self, ctx: &ContextKey, row: LogitVector) -> Result<()> {
        self.check_row(&row)?;
        self.table.insert(ctx.clone(), row.into_vec());
        Ok(())
    }

    pub fn contexts(&self) -> impl Iterator<Item = &ContextKey> {
        self.table.keys()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    fn init_row(&self, ctx: &ContextKey) -> Option<&Vec<f64>> {
        self.init_snapshot.get(ctx)
    }

    /// L2 distance of all stored rows from their initial values. Rows created
    /// after construction are measured against zeros.
    pub fn param_distance(&self) -> f64 {
        let mut total = 0.0;
        for (ctx, row) in &self.table {
            match self.init_row(ctx) {
                Some(init) => {
                    total += row.iter().zip(init).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                }
                None => total += row.iter().map(|a| a * a).sum::<f64>(),
            }
        }
        total.sqrt()
    }

    pub fn to_file(&self) -> ModelFile {
        let encode = |m: &BTreeMap<ContextKey, Vec<f64>>| {
            m.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
        };
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            vocab_size: self.vocab_size,
            rows: encode(&self.table),
            init_rows: encode(&self.init_snapshot),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(GemError::InvalidInput(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        let mut model = Self::new(file.vocab_size)?;
        let decode = |m: BTreeMap<String, Vec<f64>>| -> Result<BTreeMap<ContextKey, Vec<f64>>> {
            m.into_iter()
                .map(|(k, v)| {
                    let row = LogitVector::new(v)?;
                    model.check_row(&row)?;
                    Ok((k.parse()?, row.into_vec()))
                })
                .collect()
        };
        let table = decode(file.rows)?;
        let init = decode(file.init_rows)?;
        model.table = table;
        model.init_snapshot = init;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_file(serde_json::from_str(&text)?)
    }
}

/// On-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub vocab_size: usize,
    pub rows: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub init_rows: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr,
            weight_decay: 0.0,
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            weight_decay: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(GemError::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(GemError::InvalidParameter(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Optimizer with per-row Adam moments. Only rows that receive a gradient in
/// a step are updated (and only their moments advance).
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    /// Learning rate used by the next step; schedules overwrite it.
    pub lr: f64,
    step: u64,
    moments: BTreeMap<ContextKey, (Vec<f64>, Vec<f64>)>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            lr: config.lr,
            step: 0,
            moments: BTreeMap::new(),
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies descent gradients `grads` (already averaged) to `model`.
    pub fn apply(&mut self, model: &mut TabularModel, grads: &BTreeMap<ContextKey, Vec<f64>>) {
        self.step += 1;
        let lr = self.lr;
        let wd = self.config.weight_decay;
        let t = self.step as i32;
        for (ctx, grad) in grads {
            model.logits(ctx);
            let row = model.table.get_mut(ctx).expect("row materialized above");
            let g: Vec<f64> = grad.iter().zip(row.iter()).map(|(g, th)| g + wd * th).collect();
            match self.config.kind {
                OptimizerKind::Sgd => {
                    for (th, gk) in row.iter_mut().zip(&g) {
                        *th -= lr * gk;
                    }
                }
                OptimizerKind::Adam => {
                    let k = g.len();
                    let (m, v) = self
                        .moments
                        .entry(ctx.clone())
                        .or_insert_with(|| (vec![0.0; k], vec![0.0; k]));
                    let bc1 = 1.0 - ADAM_BETA1.powi(t);
                    let bc2 = 1.0 - ADAM_BETA2.powi(t);
                    for i in 0..k {
                        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        row[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub grad_norm: f64,
}

/// Mean loss over the batch and the averaged descent gradient per context.
pub fn batch_gradients(
    model: &TabularModel,
    batch: &[(ContextKey, Target)],
    spec: &LossSpec,
) -> Result<(f64, BTreeMap<ContextKey, Vec<f64>>)> {
    if batch.is_empty() {
        return Err(GemError::InvalidInput("empty batch".into()));
    }
    spec.validate()?;
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads: BTreeMap<ContextKey, Vec<f64>> = BTreeMap::new();
    for (ctx, target) in batch {
        let logits = model.row(ctx);
        let (l, ascent) = match target {
            Target::Label(i) => {
                check_index(*i, model.vocab_size)?;
                loss_and_ascent(&logits, *i, spec)?
            }
            Target::Expected(p) => expected_loss_and_ascent(&logits, p, spec)?,
        };
        loss += scale * l;
        let acc = grads
            .entry(ctx.clone())
            .or_insert_with(|| vec![0.0; model.vocab_size]);
        for (a, g) in acc.iter_mut().zip(ascent) {
            *a -= scale * g;
        }
    }
    Ok((loss, grads))
}

fn grad_norm(grads: &BTreeMap<ContextKey, Vec<f64>>) -> f64 {
    grads
        .values()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// One optimizer step on the mean loss of `batch`.
pub fn train_step(
    model: &mut TabularModel,
    batch: &[(ContextKey, Target)],
    spec: &LossSpec,
    opt: &mut OptimizerState,
) -> Result<StepStats> {
    let (loss, grads) = batch_gradients(model, batch, spec)?;
    let norm = grad_norm(&grads);
    opt.apply(model, &grads);
    Ok(StepStats {
        loss,
        grad_norm: norm,
    })
}

/// `p^beta / sum p^beta`, the unique equilibrium of the GEM game for a
/// strictly positive data distribution `p` and `beta > 0`. With
/// `beta = 1 / (gamma + 1)` this also minimizes `KL(f || p) - gamma H(f)`.
pub fn closed_form_equilibrium(p: &ProbVector, beta: f64) -> Result<ProbVector> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(GemError::InvalidParameter(format!(
            "beta must lie in (0, 1], got {beta}"
        )));
    }
    if let Some(pos) = p.iter().position(|v| *v <= 0.0) {
        return Err(GemError::Precondition(format!(
            "the equilibrium is only unique for strictly positive data distributions; p({pos}) = 0"
        )));
    }
    let scaled: Vec<f64> = p.iter().map(|v| beta * v.ln()).collect();
    Ok(softmax(&LogitVector::new(scaled)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub grad_tol: f64,
    pub max_steps: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub steps: usize,
    pub grad_norm: f64,
    pub loss: f64,
    pub converged: bool,
}

/// Full-batch training against exact per-context target distributions until
/// the gradient norm drops below `cfg.grad_tol` or the step budget runs out.
pub fn fit_exact(
    model: &mut TabularModel,
    targets: &[(ContextKey, ProbVector)],
    spec: &LossSpec,
    opt: &mut OptimizerState,
    cfg: &FitConfig,
) -> Result<FitReport> {
    let batch: Vec<(ContextKey, Target)> = targets
        .iter()
        .map(|(c, p)| (c.clone(), Target::Expected(p.clone())))
        .collect();
    let mut report = FitReport {
        steps: 0,
        grad_norm: f64::INFINITY,
        loss: f64::NAN,
        converged: false,
    };
    while report.steps < cfg.max_steps {
        let (loss, grads) = batch_gradients(model, &batch, spec)?;
        report.loss = loss;
        report.grad_norm = grad_norm(&grads);
        if report.grad_norm < cfg.grad_tol {
            report.converged = true;
            break;
        }
        opt.apply(model, &grads);
        report.steps += 1;
    }
    Ok(report)
}
