//! Logit-flow view of loss gradients.
//!
//! A gradient over a categorical head that only moves mass from "source"
//! tokens to one target token can be written as a weighted sum of transfer
//! vectors `e(i <- j)`, which hold `+1` at the target `i`, `-1` at the source
//! `j` and zero elsewhere. Cross-entropy uses `w(i <- j) = f(j)`; the GEM
//! gradient uses `w(i <- j) = q(j)`.
//!
//! Sign convention: every "gradient" returned by this module is an ascent
//! direction, i.e. the negative gradient `-dL/dtheta` of the loss.

use serde::{Deserialize, Serialize};

use crate::dist::{argmax, entropy, softmax, LogitVector, ProbVector};
use crate::error::{check_index, GemError, Result};

/// Default cutoff below which a source probability counts as zero.
pub const DEFAULT_SOURCE_THRESHOLD: f64 = 1e-8;

/// Trajectories keep every snapshot up to this many steps, then thin out.
pub const DENSE_SNAPSHOT_LIMIT: usize = 10_000;
pub const SPARSE_SNAPSHOT_STRIDE: usize = 100;

/// One weighted transfer `weight * e(target <- source)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub target: usize,
    pub source: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowDecomposition {
    pub target: usize,
    pub vocab_size: usize,
    pub flows: Vec<Flow>,
}

impl FlowDecomposition {
    /// Rebuilds the ascent direction `sum w * e(i <- j)`.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.vocab_size];
        for flow in &self.flows {
            g[flow.target] += flow.weight;
            g[flow.source] -= flow.weight;
        }
        g
    }

    /// Total weight leaving the sources.
    pub fn total_sent(&self) -> f64 {
        self.flows.iter().map(|f| f.weight).sum()
    }
}

/// `onehot(target) - f`, the ascent direction of the cross-entropy loss.
pub fn ce_gradient(f: &ProbVector, target: usize) -> Result<Vec<f64>> {
    check_index(target, f.len())?;
    let mut g: Vec<f64> = f.iter().map(|v| -v).collect();
    g[target] = 1.0 - f[target];
    Ok(g)
}

/// Splits the transfer implied by `weights` into one flow per source token
/// with non-zero weight. With `weights = f` this is the cross-entropy
/// gradient; with `weights = q` it is the GEM gradient.
pub fn flow_decompose(weights: &ProbVector, target: usize) -> Result<FlowDecomposition> {
    check_index(target, weights.len())?;
    decompose_weights(weights.as_slice(), target)
}

// Like flow_decompose but over arbitrary non-negative weights (e.g. q * h').
pub(crate) fn decompose_weights(weights: &[f64], target: usize) -> Result<FlowDecomposition> {
    check_index(target, weights.len())?;
    let flows = weights
        .iter()
        .enumerate()
        .filter(|(j, w)| *j != target && **w > 0.0)
        .map(|(source, weight)| Flow {
            target,
            source,
            weight: *weight,
        })
        .collect();
    Ok(FlowDecomposition {
        target,
        vocab_size: weights.len(),
        flows,
    })
}

/// `|sent - received|` for a decomposition: the weight leaving the sources
/// against the reconstructed gradient component at the target.
pub fn conservation_residual(d: &FlowDecomposition) -> f64 {
    if d.flows.is_empty() {
        return 0.0;
    }
    let received = d.reconstruct()[d.target];
    (d.total_sent() - received).abs()
}

/// Applies every flow of `d` at once: `logits + eta * reconstruct(d)`.
/// This is one plain gradient-ascent step, the batched counterpart of the
/// one-flow-per-step iterations below.
pub fn apply_flows(logits: &LogitVector, d: &FlowDecomposition, eta: f64) -> Result<LogitVector> {
    if d.vocab_size != logits.len() {
        return Err(GemError::InvalidInput(format!(
            "decomposition over {} tokens applied to {} logits",
            d.vocab_size,
            logits.len()
        )));
    }
    let g = d.reconstruct();
    LogitVector::new(logits.iter().zip(&g).map(|(l, gi)| l + eta * gi).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    StoppingRule,
    StepBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    /// 1-based step count at which this snapshot was taken.
    pub step: usize,
    pub source: usize,
    /// `eta * w(i <- j)` moved by this step.
    pub amount: f64,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub target: usize,
    pub initial: Vec<f64>,
    pub steps: Vec<TrajectoryStep>,
    pub steps_taken: usize,
    pub terminated_by: Termination,
    pub final_logits: Vec<f64>,
}

impl Trajectory {
    pub fn final_logits(&self) -> LogitVector {
        LogitVector::new(self.final_logits.clone()).expect("trajectory logits stay finite")
    }

    pub fn final_probs(&self) -> ProbVector {
        softmax(&self.final_logits())
    }

    pub fn final_entropy(&self) -> f64 {
        entropy(&self.final_probs())
    }

    /// Euclidean distance between the final and initial logits.
    pub fn displacement(&self) -> f64 {
        self.final_logits
            .iter()
            .zip(&self.initial)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationConfig {
    pub eta: f64,
    pub max_steps: usize,
    /// A source is active while its probability exceeds this value.
    pub threshold: f64,
}

impl IterationConfig {
    pub fn new(eta: f64, max_steps: usize) -> Self {
        Self {
            eta,
            max_steps,
            threshold: DEFAULT_SOURCE_THRESHOLD,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(GemError::InvalidParameter(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.threshold >= 0.0) {
            return Err(GemError::InvalidParameter("threshold must be >= 0".into()));
        }
        Ok(())
    }
}

/// Picks the source for the next transfer, or `None` when the iteration
/// should stop.
trait SourceRule {
    fn pick(&self, f: &[f64], target: usize) -> Option<usize>;
}

/// Cross-entropy iteration: any source still holding probability. We take the
/// most probable one (lowest index on ties) so that runs are deterministic.
struct AnyActiveSource {
    threshold: f64,
}

impl SourceRule for AnyActiveSource {
    fn pick(&self, f: &[f64], target: usize) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (j, v) in f.iter().enumerate() {
            if j == target || *v <= self.threshold {
                continue;
            }
            if best.is_none_or(|b| *v > f[b]) {
                best = Some(j);
            }
        }
        best
    }
}

/// GEM prototype: the model's best guess, until the target is among the
/// argmax set.
struct ArgmaxSource;

impl SourceRule for ArgmaxSource {
    fn pick(&self, f: &[f64], target: usize) -> Option<usize> {
        let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if f[target] >= max {
            return None;
        }
        Some(argmax(f))
    }
}

fn iterate(
    logits: &LogitVector,
    target: usize,
    cfg: &IterationConfig,
    rule: &dyn SourceRule,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_index(target, logits.len())?;
    let initial = logits.as_slice().to_vec();
    let mut theta = initial.clone();
    let mut steps = Vec::new();
    let mut terminated_by = Termination::StepBudget;
    let mut taken = 0;

    while taken < cfg.max_steps {
        let f = softmax(&LogitVector::new(theta.clone())?);
        let Some(source) = rule.pick(f.as_slice(), target) else {
            terminated_by = Termination::StoppingRule;
            break;
        };
        // w(i <- j) = f(j), as in the cross-entropy flow map
        let amount = cfg.eta * f[source];
        theta[source] -= amount;
        theta[target] += amount;
        taken += 1;
        if taken <= DENSE_SNAPSHOT_LIMIT || taken % SPARSE_SNAPSHOT_STRIDE == 0 {
            steps.push(TrajectoryStep {
                step: taken,
                source,
                amount,
                logits: theta.clone(),
            });
        }
    }
    if taken == cfg.max_steps && terminated_by == Termination::StepBudget {
        // the budget may coincide with the stopping rule becoming true
        let f = softmax(&LogitVector::new(theta.clone())?);
        if rule.pick(f.as_slice(), target).is_none() {
            terminated_by = Termination::StoppingRule;
        }
    }

    Ok(Trajectory {
        target,
        initial,
        steps,
        steps_taken: taken,
        terminated_by,
        final_logits: theta,
    })
}

/// The sequential cross-entropy procedure: while some source token keeps
/// probability above `cfg.threshold`, move `eta * f(j)` of logit from that
/// source to the target.
pub fn run_ce_iteration(
    logits: &LogitVector,
    target: usize,
    cfg: &IterationConfig,
) -> Result<Trajectory> {
    iterate(
        logits,
        target,
        cfg,
        &AnyActiveSource {
            threshold: cfg.threshold,
        },
    )
}

/// The sparse, self-terminating prototype: only the current argmax token
/// gives up logit, and the loop stops as soon as the target is an argmax.
pub fn run_gem_prototype(
    logits: &LogitVector,
    target: usize,
    cfg: &IterationConfig,
) -> Result<Trajectory> {
    iterate(logits, target, cfg, &ArgmaxSource)
}
