//! Categorical distribution primitives.
//!
//! Everything here works in `f64` and follows the convention `0 * log 0 = 0`.
//! Divergences with a support violation return `f64::INFINITY` instead of an
//! error so that callers can log them as data points.

use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};

/// Tolerance accepted when validating a user-supplied probability vector.
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

/// Unnormalized log-scores over a vocabulary of size `K >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(GemError::InvalidInput(format!(
                "vocabulary size must be at least 2, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(GemError::InvalidInput(format!(
                "logit {pos} is not finite ({})",
                values[pos]
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(k: usize) -> Result<Self> {
        Self::new(vec![0.0; k])
    }

    /// Log-probabilities of `p`, so that `softmax(from_probs(p)) == p`.
    /// Zero entries are rejected since their logit would be `-inf`.
    pub fn from_probs(p: &ProbVector) -> Result<Self> {
        Self::new(p.iter().map(|v| v.ln()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

impl TryFrom<Vec<f64>> for LogitVector {
    type Error = GemError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<LogitVector> for Vec<f64> {
    fn from(v: LogitVector) -> Self {
        v.0
    }
}

impl std::ops::Index<usize> for LogitVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A probability vector: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates `values` as a distribution. The sum must be within
    /// [`PROB_SUM_TOLERANCE`] of one; values are stored unchanged.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(GemError::InvalidInput(format!(
                "vocabulary size must be at least 2, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(GemError::InvalidInput(format!(
                "probability {pos} is negative or not finite ({})",
                values[pos]
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(GemError::InvalidInput(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self(values))
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(GemError::InvalidInput(
                "weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(GemError::InvalidInput("weights sum to zero".into()));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn dirac(k: usize, index: usize) -> Result<Self> {
        crate::error::check_index(index, k)?;
        let mut v = vec![0.0; k];
        v[index] = 1.0;
        Self::new(v)
    }

    // Skips validation; callers guarantee a normalized, non-negative vector.
    pub(crate) fn from_normalized(values: Vec<f64>) -> Self {
        debug_assert!((values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max_abs_diff(&self, other: &ProbVector) -> f64 {
        max_abs_diff(&self.0, &other.0)
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = GemError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(v: ProbVector) -> Self {
        v.0
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

// Shared by softmax and sharpen so that sharpen(l, 1) is bit-identical.
fn softmax_slice(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn softmax(logits: &LogitVector) -> ProbVector {
    ProbVector::from_normalized(softmax_slice(logits.as_slice()))
}

/// Normalized log-probabilities `l - logsumexp(l)`.
pub fn log_softmax(logits: &LogitVector) -> LogitVector {
    let lse = logsumexp(logits.as_slice());
    LogitVector(logits.iter().map(|v| v - lse).collect())
}

pub(crate) fn log_softmax_slice(values: &[f64]) -> Vec<f64> {
    let lse = logsumexp(values);
    values.iter().map(|v| v - lse).collect()
}

/// Shannon entropy in nats.
pub fn entropy(p: &ProbVector) -> f64 {
    entropy_slice(p.as_slice())
}

pub(crate) fn entropy_slice(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|v| **v > 0.0)
        .map(|v| v * v.ln())
        .sum::<f64>()
}

fn kl(a: &[f64], b: &[f64]) -> f64 {
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        if *x == 0.0 {
            continue;
        }
        if *y == 0.0 {
            return f64::INFINITY;
        }
        total += x * (x / y).ln();
    }
    total.max(0.0)
}

/// `KL(p || f) = sum p log(p / f)`. Returns `f64::INFINITY` when `f` misses
/// part of the support of `p`.
pub fn forward_kl(p: &ProbVector, f: &ProbVector) -> Result<f64> {
    same_len(p, f)?;
    Ok(kl(p.as_slice(), f.as_slice()))
}

/// `KL(f || p) = sum f log(f / p)`, the mode-seeking direction.
pub fn reverse_kl(f: &ProbVector, p: &ProbVector) -> Result<f64> {
    same_len(f, p)?;
    Ok(kl(f.as_slice(), p.as_slice()))
}

fn same_len(a: &ProbVector, b: &ProbVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(GemError::InvalidInput(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Temperature-sharpened distribution `softmax(logits / beta)`.
///
/// `beta == 1` is exactly `softmax(logits)`; `beta == 0` is the Dirac mass at
/// the argmax (lowest index on ties).
pub fn sharpen(logits: &LogitVector, beta: f64) -> Result<ProbVector> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(GemError::InvalidParameter(format!(
            "beta must be finite and >= 0, got {beta}"
        )));
    }
    if beta == 0.0 {
        let mut v = vec![0.0; logits.len()];
        v[logits.argmax()] = 1.0;
        return Ok(ProbVector::from_normalized(v));
    }
    if beta == 1.0 {
        return Ok(softmax(logits));
    }
    let scaled: Vec<f64> = logits.iter().map(|v| v / beta).collect();
    Ok(ProbVector::from_normalized(softmax_slice(&scaled)))
}
