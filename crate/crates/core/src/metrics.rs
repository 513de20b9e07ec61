//! Diversity and quality metrics.

use std::collections::HashMap;

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::dist::entropy;
use crate::error::{GemError, Result};
use crate::losses::ce_loss;
use crate::models::TabularModel;
use crate::sequential::{reset_expand, ContextKey, TokenSequence};

/// Added to zero n-gram precisions before taking logs.
pub const BLEU_EPSILON: f64 = 1e-9;

/// Candidate responses to one prompt, optionally scored by a reward function.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseSet {
    pub responses: Vec<TokenSequence>,
    pub rewards: Option<Vec<f64>>,
}

impl ResponseSet {
    pub fn new(responses: Vec<TokenSequence>, rewards: Option<Vec<f64>>) -> Result<Self> {
        let Some(first) = responses.first() else {
            return Err(GemError::InvalidInput("empty response set".into()));
        };
        if responses.iter().any(|r| r.prompt != first.prompt) {
            return Err(GemError::InvalidInput(
                "responses in a set must share their prompt".into(),
            ));
        }
        if let Some(r) = &rewards {
            if r.len() != responses.len() {
                return Err(GemError::InvalidInput(format!(
                    "{} rewards for {} responses",
                    r.len(),
                    responses.len()
                )));
            }
        }
        Ok(Self { responses, rewards })
    }

    pub fn tokens(&self) -> Vec<&[u32]> {
        self.responses.iter().map(|r| r.response.as_slice()).collect()
    }
}

/// Mean entropy of the model's next-token distribution over `contexts`.
pub fn mean_conditional_entropy(model: &TabularModel, contexts: &[ContextKey]) -> Result<f64> {
    if contexts.is_empty() {
        return Err(GemError::InvalidInput("no contexts to average over".into()));
    }
    let total: f64 = contexts.iter().map(|c| entropy(&model.probs(c))).sum();
    Ok(total / contexts.len() as f64)
}

/// `exp` of the mean per-token negative log-likelihood over the
/// reset-expanded pairs of `data`.
pub fn perplexity(model: &TabularModel, data: &[TokenSequence], window: Option<usize>) -> Result<f64> {
    let pairs = reset_expand(data, model.vocab_size(), window)?;
    if pairs.is_empty() {
        return Err(GemError::InvalidInput("no tokens to score".into()));
    }
    let mut nll = 0.0;
    for (ctx, y) in &pairs {
        nll += ce_loss(&model.row(ctx), *y)?;
    }
    Ok((nll / pairs.len() as f64).exp())
}

/// Percentage of distinct n-grams within each response, averaged over
/// responses. Responses shorter than `n` count as 100.
pub fn ngram_diversity(responses: &[&[u32]], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(GemError::InvalidParameter("n must be >= 1".into()));
    }
    if responses.is_empty() {
        return Err(GemError::InvalidInput("no responses".into()));
    }
    let total: f64 = responses
        .iter()
        .map(|r| {
            if r.len() < n {
                return 100.0;
            }
            let grams: Vec<&[u32]> = r.windows(n).collect();
            let mut distinct = grams.clone();
            distinct.sort();
            distinct.dedup();
            100.0 * distinct.len() as f64 / grams.len() as f64
        })
        .sum();
    Ok(total / responses.len() as f64)
}

fn ngram_counts(tokens: &[u32], n: usize) -> HashMap<&[u32], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU of `candidate` against `references` in `[0, 1]`: uniform
/// geometric mean of clipped n-gram precisions for `n = 1..=max_n`, times the
/// brevity penalty against the closest reference length (shorter on ties).
/// Zero precisions are replaced by [`BLEU_EPSILON`].
pub fn sentence_bleu(candidate: &[u32], references: &[&[u32]], max_n: usize) -> Result<f64> {
    if max_n == 0 {
        return Err(GemError::InvalidParameter("max_n must be >= 1".into()));
    }
    if references.is_empty() {
        return Err(GemError::InvalidInput("BLEU needs at least one reference".into()));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand = ngram_counts(candidate, n);
        let total: usize = cand.values().sum();
        let mut max_ref: HashMap<&[u32], usize> = HashMap::new();
        for r in references {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let clipped: usize = cand
            .iter()
            .map(|(g, c)| (*c).min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let precision = if clipped == 0 {
            BLEU_EPSILON
        } else {
            clipped as f64 / total as f64
        };
        log_sum += precision.ln();
    }
    let c = candidate.len() as i64;
    let r = references
        .iter()
        .map(|r| r.len() as i64)
        .min_by_key(|len| ((len - c).abs(), *len))
        .expect("references are non-empty");
    let bp = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    Ok(bp * (log_sum / max_n as f64).exp())
}

/// `100 - Self-BLEU`, where Self-BLEU is the mean over responses of the BLEU
/// (x100) of each response against all others.
pub fn self_bleu_diversity(responses: &[&[u32]], max_n: usize) -> Result<f64> {
    if responses.len() < 2 {
        return Err(GemError::InvalidInput(
            "self-BLEU needs at least two responses".into(),
        ));
    }
    let scores: Vec<f64> = (0..responses.len())
        .into_par_iter()
        .map(|i| {
            let refs: Vec<&[u32]> = responses
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, r)| *r)
                .collect();
            sentence_bleu(responses[i], &refs, max_n)
        })
        .collect::<Result<_>>()?;
    let self_bleu = 100.0 * scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(100.0 - self_bleu)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Unbiased pass@k from `n` samples of which `c` are correct:
/// `1 - C(n - c, k) / C(n, k)`, evaluated with log-gamma differences.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64> {
    if c > n || k == 0 || k > n {
        return Err(GemError::InvalidParameter(format!(
            "pass@k needs 0 <= c <= n and 1 <= k <= n (n={n}, c={c}, k={k})"
        )));
    }
    if n - c < k {
        return Ok(1.0);
    }
    if c == 0 {
        return Ok(0.0);
    }
    let ratio = (ln_choose(n - c, k) - ln_choose(n, k)).exp();
    Ok((1.0 - ratio).clamp(0.0, 1.0))
}

/// Highest-reward response; ties go to the lowest index.
pub fn best_of_n(set: &ResponseSet) -> Result<(usize, f64)> {
    let rewards = set
        .rewards
        .as_ref()
        .ok_or_else(|| GemError::InvalidInput("best-of-n needs rewards".into()))?;
    let mut best = 0;
    for (i, r) in rewards.iter().enumerate() {
        if *r > rewards[best] {
            best = i;
        }
    }
    Ok((best, rewards[best]))
}

/// Bradley-Terry probability that `a` beats `b`: `sigmoid(r_a - r_b)`.
pub fn bt_win_prob(r_a: f64, r_b: f64) -> f64 {
    let d = r_a - r_b;
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}
