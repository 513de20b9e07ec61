//! Loss and gradient engine: cross-entropy, cross-entropy with an entropy
//! bonus, and GEM with a linear or log-sigmoid transformation.
//!
//! All gradients are returned as ascent directions (`-dL/dtheta`). For GEM,
//! `q = softmax(logits / beta)` and the log-sigmoid weights are evaluated at
//! the current logits and held constant while differentiating, so the
//! gradient is exactly the flow sum `sum_j q(j) h'(l_j - l_i) e(i <- j)`.

use serde::{Deserialize, Serialize};

use crate::dist::{
    entropy, log_softmax_slice, sharpen, softmax, LogitVector, ProbVector,
};
use crate::error::{check_index, GemError, Result};
use crate::flow::{decompose_weights, FlowDecomposition};

pub const DEFAULT_H_SCALE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Ce,
    CeEntropy,
    Gem,
}

/// Transformation applied to the log-probability gap in generalized GEM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HFunction {
    #[default]
    Linear,
    LogSigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub h: HFunction,
    #[serde(default = "default_h_scale")]
    pub h_scale: f64,
}

fn default_beta() -> f64 {
    1.0
}

fn default_h_scale() -> f64 {
    DEFAULT_H_SCALE
}

impl LossSpec {
    pub fn ce() -> Self {
        Self {
            kind: LossKind::Ce,
            beta: 1.0,
            gamma: 0.0,
            h: HFunction::Linear,
            h_scale: DEFAULT_H_SCALE,
        }
    }

    pub fn ce_entropy(gamma: f64) -> Self {
        Self {
            kind: LossKind::CeEntropy,
            gamma,
            ..Self::ce()
        }
    }

    pub fn gem(beta: f64) -> Self {
        Self {
            kind: LossKind::Gem,
            beta,
            ..Self::ce()
        }
    }

    pub fn gem_log_sigmoid(beta: f64, h_scale: f64) -> Self {
        Self {
            h: HFunction::LogSigmoid,
            h_scale,
            ..Self::gem(beta)
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            LossKind::Ce => Ok(()),
            LossKind::CeEntropy => {
                if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
                    return Err(GemError::InvalidParameter(format!(
                        "gamma must be >= 0, got {}",
                        self.gamma
                    )));
                }
                Ok(())
            }
            LossKind::Gem => {
                if !(0.0..=1.0).contains(&self.beta) {
                    return Err(GemError::InvalidParameter(format!(
                        "beta must lie in [0, 1], got {}",
                        self.beta
                    )));
                }
                if self.h == HFunction::LogSigmoid && !(self.h_scale > 0.0 && self.h_scale.is_finite()) {
                    return Err(GemError::InvalidParameter(format!(
                        "h_scale must be positive, got {}",
                        self.h_scale
                    )));
                }
                Ok(())
            }
        }
    }

    /// Short label used for run and cell names, e.g. `gem_b0.7`.
    pub fn label(&self) -> String {
        match (self.kind, self.h) {
            (LossKind::Ce, _) => "ce".to_string(),
            (LossKind::CeEntropy, _) => format!("ce_ent_g{}", self.gamma),
            (LossKind::Gem, HFunction::Linear) => format!("gem_b{}", self.beta),
            (LossKind::Gem, HFunction::LogSigmoid) => format!("gem_ls_b{}", self.beta),
        }
    }
}

pub fn ce_loss(logits: &LogitVector, target: usize) -> Result<f64> {
    check_index(target, logits.len())?;
    Ok(-log_softmax_slice(logits.as_slice())[target])
}

/// `ce_loss - gamma * H(softmax(logits))`.
pub fn ce_entropy_loss(logits: &LogitVector, target: usize, gamma: f64) -> Result<f64> {
    LossSpec::ce_entropy(gamma).validate()?;
    let ce = ce_loss(logits, target)?;
    if gamma == 0.0 {
        return Ok(ce);
    }
    Ok(ce - gamma * entropy(&softmax(logits)))
}

/// The meta-controller distribution `softmax(log f / beta)`.
pub fn gem_q(logits: &LogitVector, beta: f64) -> Result<ProbVector> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(GemError::InvalidParameter(format!(
            "beta must lie in [0, 1], got {beta}"
        )));
    }
    // log f differs from the logits by a constant, which softmax ignores
    sharpen(logits, beta)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-token `h'` weights for target `target`. For the log-sigmoid form this
/// is `sigmoid(h_scale * (l_j - l_target))` on raw logits.
pub fn h_weights(logits: &LogitVector, target: usize, spec: &LossSpec) -> Result<Vec<f64>> {
    check_index(target, logits.len())?;
    Ok(match spec.h {
        HFunction::Linear => vec![1.0; logits.len()],
        HFunction::LogSigmoid => {
            let lt = logits[target];
            logits
                .iter()
                .map(|l| sigmoid(spec.h_scale * (l - lt)))
                .collect()
        }
    })
}

/// The frozen per-token coefficients `q(j) * h'(.)` of the GEM loss.
pub fn gem_coefficients(logits: &LogitVector, target: usize, spec: &LossSpec) -> Result<Vec<f64>> {
    require_gem(spec)?;
    let q = gem_q(logits, spec.beta)?;
    let w = h_weights(logits, target, spec)?;
    Ok(q.iter().zip(&w).map(|(a, b)| a * b).collect())
}

fn require_gem(spec: &LossSpec) -> Result<()> {
    spec.validate()?;
    if spec.kind != LossKind::Gem {
        return Err(GemError::InvalidParameter(format!(
            "expected a GEM loss spec, got {:?}",
            spec.kind
        )));
    }
    Ok(())
}

fn coefficient_loss(log_f: &[f64], coeffs: &[f64], target: usize) -> f64 {
    let lt = log_f[target];
    coeffs
        .iter()
        .zip(log_f)
        .enumerate()
        .filter(|(j, _)| *j != target)
        .map(|(_, (c, lf))| c * (lf - lt))
        .sum()
}

/// `sum_j c(j) (log f(j) - log f(target))` with `c = q * h'`.
pub fn gem_loss(logits: &LogitVector, target: usize, spec: &LossSpec) -> Result<f64> {
    let coeffs = gem_coefficients(logits, target, spec)?;
    let log_f = log_softmax_slice(logits.as_slice());
    Ok(coefficient_loss(&log_f, &coeffs, target))
}

/// The flow decomposition behind [`gem_gradient`].
pub fn gem_flows(logits: &LogitVector, target: usize, spec: &LossSpec) -> Result<FlowDecomposition> {
    let coeffs = gem_coefficients(logits, target, spec)?;
    decompose_weights(&coeffs, target)
}

/// Ascent direction of the GEM loss with `q` and `h'` held fixed.
pub fn gem_gradient(logits: &LogitVector, target: usize, spec: &LossSpec) -> Result<Vec<f64>> {
    let coeffs = gem_coefficients(logits, target, spec)?;
    Ok(ascent_from_coefficients(&coeffs, target))
}

// C * onehot(target) - c, skipping the target's own (zero) contribution.
fn ascent_from_coefficients(coeffs: &[f64], target: usize) -> Vec<f64> {
    let mut g: Vec<f64> = coeffs.iter().map(|c| -c).collect();
    g[target] = coeffs
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target)
        .map(|(_, c)| c)
        .sum();
    g
}

/// Loss value and ascent direction for any [`LossSpec`].
pub fn loss_and_ascent(logits: &LogitVector, target: usize, spec: &LossSpec) -> Result<(f64, Vec<f64>)> {
    spec.validate()?;
    check_index(target, logits.len())?;
    match spec.kind {
        LossKind::Ce => {
            let f = softmax(logits);
            Ok((ce_loss(logits, target)?, crate::flow::ce_gradient(&f, target)?))
        }
        LossKind::CeEntropy => {
            let f = softmax(logits);
            let log_f = log_softmax_slice(logits.as_slice());
            let h = entropy(&f);
            let mut g = crate::flow::ce_gradient(&f, target)?;
            // dH/dtheta_k = -f_k (log f_k + H)
            for (k, gk) in g.iter_mut().enumerate() {
                if f[k] > 0.0 {
                    *gk -= spec.gamma * f[k] * (log_f[k] + h);
                }
            }
            Ok((-log_f[target] - spec.gamma * h, g))
        }
        LossKind::Gem => {
            let coeffs = gem_coefficients(logits, target, spec)?;
            let log_f = log_softmax_slice(logits.as_slice());
            Ok((
                coefficient_loss(&log_f, &coeffs, target),
                ascent_from_coefficients(&coeffs, target),
            ))
        }
    }
}

/// Loss and ascent direction averaged over a target distribution `p`:
/// `sum_i p(i) * loss(logits, i)`. This is the exact-expectation form used
/// for oracle-grade convergence runs.
pub fn expected_loss_and_ascent(
    logits: &LogitVector,
    p: &ProbVector,
    spec: &LossSpec,
) -> Result<(f64, Vec<f64>)> {
    if p.len() != logits.len() {
        return Err(GemError::InvalidInput(format!(
            "target distribution over {} tokens for {} logits",
            p.len(),
            logits.len()
        )));
    }
    let mut loss = 0.0;
    let mut g = vec![0.0; logits.len()];
    for (i, pi) in p.iter().enumerate() {
        if *pi == 0.0 {
            continue;
        }
        let (li, gi) = loss_and_ascent(logits, i, spec)?;
        loss += pi * li;
        for (acc, v) in g.iter_mut().zip(gi) {
            *acc += pi * v;
        }
    }
    Ok((loss, g))
}

/// Loss evaluated at `theta` with any GEM coefficients frozen at `frozen`.
fn frozen_loss(theta: &[f64], target: usize, spec: &LossSpec, frozen: Option<&[f64]>) -> Result<f64> {
    let logits = LogitVector::new(theta.to_vec())?;
    match (spec.kind, frozen) {
        (LossKind::Ce, _) => ce_loss(&logits, target),
        (LossKind::CeEntropy, _) => ce_entropy_loss(&logits, target, spec.gamma),
        (LossKind::Gem, Some(c)) => Ok(coefficient_loss(&log_softmax_slice(theta), c, target)),
        (LossKind::Gem, None) => unreachable!("GEM coefficients are always frozen"),
    }
}

/// Compares the analytic gradient against central finite differences of the
/// scalar loss, with GEM's `q` and `h'` frozen at `logits`. Returns the
/// largest `|a - n| / max(1, |a|, |n|)` over coordinates.
pub fn analytic_vs_numeric(
    logits: &LogitVector,
    target: usize,
    spec: &LossSpec,
    step: f64,
) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&step) {
        return Err(GemError::InvalidParameter(format!(
            "finite-difference step must lie in [1e-7, 1e-3], got {step}"
        )));
    }
    let (_, ascent) = loss_and_ascent(logits, target, spec)?;
    let frozen = match spec.kind {
        LossKind::Gem => Some(gem_coefficients(logits, target, spec)?),
        _ => None,
    };
    let mut theta = logits.as_slice().to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..theta.len() {
        let orig = theta[k];
        theta[k] = orig + step;
        let up = frozen_loss(&theta, target, spec, frozen.as_deref())?;
        theta[k] = orig - step;
        let down = frozen_loss(&theta, target, spec, frozen.as_deref())?;
        theta[k] = orig;
        let numeric = (up - down) / (2.0 * step);
        let analytic = -ascent[k];
        let err = (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::max_abs_diff;
    use crate::flow::ce_gradient;

    fn lv(v: &[f64]) -> LogitVector {
        LogitVector::new(v.to_vec()).unwrap()
    }

    fn logits_of(p: &[f64]) -> LogitVector {
        lv(&p.iter().map(|v| v.ln()).collect::<Vec<_>>())
    }

    #[test]
    fn ce_loss_cases() {
        assert!(ce_loss(&lv(&[30.0, 0.0, 0.0]), 0).unwrap() < 1e-12);
        assert!((ce_loss(&lv(&[0.0; 4]), 3).unwrap() - 4f64.ln()).abs() < 1e-15);
        let l = ce_loss(&logits_of(&[0.4, 0.3, 0.2, 0.1]), 2).unwrap();
        assert!((l - 1.6094379124341003).abs() < 1e-12);
        assert!(ce_loss(&lv(&[0.0; 4]), 4).is_err());
    }

    #[test]
    fn ce_entropy_loss_cases() {
        let l = logits_of(&[0.8, 0.2]);
        assert_eq!(ce_entropy_loss(&l, 1, 0.0).unwrap(), ce_loss(&l, 1).unwrap());
        assert!(ce_entropy_loss(&lv(&[0.0; 4]), 0, 1.0).unwrap().abs() < 1e-15);
        // 1.609438 - 0.5 * 0.500402
        assert!((ce_entropy_loss(&l, 1, 0.5).unwrap() - 1.3592367006650063).abs() < 1e-12);
        assert!(ce_entropy_loss(&l, 1, -0.1).is_err());
    }

    #[test]
    fn gem_q_cases() {
        let l = logits_of(&[0.4, 0.3, 0.2, 0.1]);
        assert!(max_abs_diff(gem_q(&l, 1.0).unwrap().as_slice(), softmax(&l).as_slice()) == 0.0);
        assert_eq!(gem_q(&l, 0.0).unwrap().as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        let expected = [0.16 / 0.3, 0.09 / 0.3, 0.04 / 0.3, 0.01 / 0.3];
        assert!(max_abs_diff(gem_q(&l, 0.5).unwrap().as_slice(), &expected) < 1e-12);
        assert!(gem_q(&l, 1.5).is_err());
        assert!(gem_q(&l, -0.5).is_err());
    }

    #[test]
    fn gem_loss_vanishes_on_matched_dirac() {
        let l = lv(&[40.0, 0.0, 0.0]);
        assert!(gem_loss(&l, 0, &LossSpec::gem(0.7)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn gem_loss_hand_sum() {
        // beta = 1 makes q = f = [0.5, 0.3, 0.2]; target is token 2 (1-based)
        let l = logits_of(&[0.5, 0.3, 0.2]);
        let v = gem_loss(&l, 1, &LossSpec::gem(1.0)).unwrap();
        // 0.5 (ln .5 - ln .3) + 0.2 (ln .2 - ln .3)
        assert!((v - 0.17431979026136257).abs() < 1e-12);
    }

    #[test]
    fn gem_gradient_hand_sum() {
        let l = logits_of(&[0.5, 0.3, 0.2]);
        let g = gem_gradient(&l, 1, &LossSpec::gem(1.0)).unwrap();
        assert!(max_abs_diff(&g, &[-0.5, 0.7, -0.2]) < 1e-12);
    }

    #[test]
    fn gem_gradient_vanishes_at_argmax_with_beta_zero() {
        let l = lv(&[0.1, 1.3, -0.4]);
        assert_eq!(gem_gradient(&l, 1, &LossSpec::gem(0.0)).unwrap(), vec![0.0; 3]);
        // and with the target elsewhere the only source is the argmax
        let g = gem_gradient(&l, 0, &LossSpec::gem(0.0)).unwrap();
        assert_eq!(g, vec![1.0, -1.0, 0.0]);
    }

    #[test]
    fn beta_one_matches_ce() {
        let l = lv(&[0.3, -1.1, 2.0, 0.4, -0.2]);
        for t in 0..5 {
            let a = gem_gradient(&l, t, &LossSpec::gem(1.0)).unwrap();
            let b = ce_gradient(&softmax(&l), t).unwrap();
            assert!(max_abs_diff(&a, &b) < 1e-12);
        }
    }

    #[test]
    fn gradients_sum_to_zero() {
        let l = lv(&[0.3, -1.1, 2.0, 0.4, -0.2]);
        for spec in [
            LossSpec::ce(),
            LossSpec::ce_entropy(0.3),
            LossSpec::gem(0.6),
            LossSpec::gem_log_sigmoid(0.6, 0.01),
        ] {
            let (_, g) = loss_and_ascent(&l, 3, &spec).unwrap();
            assert!(g.iter().sum::<f64>().abs() < 1e-12, "{spec:?}");
        }
    }

    #[test]
    fn finite_difference_agreement() {
        let l = lv(&[0.3, -1.1, 2.0, 0.4, -0.2, 1.7, -0.9, 0.05]);
        for spec in [
            LossSpec::ce(),
            LossSpec::ce_entropy(0.1),
            LossSpec::gem(0.7),
            LossSpec::gem_log_sigmoid(0.7, 0.01),
        ] {
            let err = analytic_vs_numeric(&l, 2, &spec, 1e-5).unwrap();
            assert!(err < 1e-6, "{spec:?}: {err}");
        }
        assert!(analytic_vs_numeric(&l, 2, &LossSpec::ce(), 1e-2).is_err());
    }

    #[test]
    fn log_sigmoid_weights_are_monotone() {
        let l = lv(&[-3.0, -1.0, 0.0, 2.0, 5.0]);
        let w = h_weights(&l, 2, &LossSpec::gem_log_sigmoid(0.7, 0.01)).unwrap();
        assert_eq!(w[2], 0.5);
        for pair in w.windows(2) {
            assert!(pair[0] < pair[1]);
        }
        assert!(w.iter().all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn spec_validation() {
        assert!(LossSpec::gem(1.2).validate().is_err());
        assert!(LossSpec::gem(-0.1).validate().is_err());
        assert!(LossSpec::ce_entropy(-1.0).validate().is_err());
        assert!(LossSpec::gem_log_sigmoid(0.5, 0.0).validate().is_err());
        assert!(gem_loss(&lv(&[0.0, 0.0]), 0, &LossSpec::ce()).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let spec: LossSpec =
            serde_json::from_str(r#"{"kind":"gem","beta":0.7,"h":"log_sigmoid"}"#).unwrap();
        assert_eq!(spec, LossSpec::gem_log_sigmoid(0.7, 0.01));
        assert!(serde_json::from_str::<LossSpec>(r#"{"kind":"ce","betta":1}"#).is_err());
    }
}
