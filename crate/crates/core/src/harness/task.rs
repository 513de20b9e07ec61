//! Synthetic tasks with a known ground-truth conditional process.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use sha2::{Digest, Sha256};

use crate::dist::{argmax, ProbVector};
use crate::error::{GemError, Result};
use crate::harness::config::{TaskSpec, TruthFamily};
use crate::sequential::{reset_expand, ContextKey, CorpusHeader, TokenSequence};

/// Smallest probability kept in a Dirichlet draw before renormalizing.
pub const DIRICHLET_FLOOR: f64 = 1e-12;

const STREAM_ANSWERS: u64 = 1;
const STREAM_CORPUS: u64 = 2;
const STREAM_PRETRAIN: u64 = 3;
const STREAM_HELDOUT: u64 = 4;
const STREAM_TRUTH_BASE: u64 = 1 << 32;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stable 64-bit digest, independent of platform and process.
pub fn stable_hash(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// A symmetric Dirichlet draw, floored at [`DIRICHLET_FLOOR`] so every entry
/// is strictly positive.
pub fn sample_dirichlet(k: usize, alpha: f64, rng: &mut impl Rng) -> Result<ProbVector> {
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| GemError::InvalidParameter(format!("dirichlet alpha {alpha}: {e}")))?;
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    let floored: Vec<f64> = draws
        .iter()
        .map(|d| if sum > 0.0 { (d / sum).max(DIRICHLET_FLOOR) } else { 1.0 })
        .collect();
    ProbVector::from_weights(floored)
}

/// The ground-truth next-token process of a task.
#[derive(Debug, Clone)]
pub struct TruthProcess {
    spec: TaskSpec,
    seed: u64,
    prompts: Vec<Vec<u32>>,
    answers: Vec<Vec<Vec<u32>>>,
    answer_weights: Vec<Vec<f64>>,
    noise: f64,
    cache: HashMap<ContextKey, ProbVector>,
}

impl TruthProcess {
    fn new(spec: &TaskSpec, seed: u64) -> Result<Self> {
        let symbols = (spec.vocab_size - 1) as u32;
        let prompts: Vec<Vec<u32>> = (0..spec.n_contexts)
            .map(|c| {
                let mut digits = vec![0u32; spec.prompt_len];
                let mut rest = c as u64;
                for d in digits.iter_mut().rev() {
                    *d = (rest % symbols as u64) as u32;
                    rest /= symbols as u64;
                }
                digits
            })
            .collect();
        let mut process = Self {
            spec: spec.clone(),
            seed,
            prompts,
            answers: Vec::new(),
            answer_weights: Vec::new(),
            noise: 0.0,
            cache: HashMap::new(),
        };
        if let TruthFamily::MultiAnswer {
            n_answers,
            answer_alpha,
            noise,
        } = spec.truth
        {
            process.noise = noise;
            for c in 0..spec.n_contexts {
                let mut rng = rng_for(seed, STREAM_ANSWERS + ((c as u64) << 8));
                let mut set: Vec<Vec<u32>> = Vec::with_capacity(n_answers);
                while set.len() < n_answers {
                    let cand: Vec<u32> = (0..spec.response_len)
                        .map(|_| rng.random_range(0..symbols))
                        .collect();
                    if !set.contains(&cand) {
                        set.push(cand);
                    }
                }
                let weights = sample_dirichlet(n_answers.max(2), answer_alpha, &mut rng)?;
                let mut w = weights.into_vec();
                w.truncate(n_answers);
                let total: f64 = w.iter().sum();
                process.answer_weights.push(w.iter().map(|v| v / total).collect());
                process.answers.push(set);
            }
        }
        Ok(process)
    }

    pub fn prompts(&self) -> &[Vec<u32>] {
        &self.prompts
    }

    /// Correct answers of prompt `c` (multi-answer tasks only).
    pub fn answers(&self, c: usize) -> Option<&[Vec<u32>]> {
        self.answers.get(c).map(Vec::as_slice)
    }

    pub fn is_correct(&self, c: usize, response: &[u32]) -> bool {
        self.answers(c)
            .is_some_and(|set| set.iter().any(|a| a.as_slice() == response))
    }

    fn key(&self, prompt: &[u32], prefix: &[u32]) -> ContextKey {
        ContextKey::from_prefix(prompt, prefix, self.spec.window)
    }

    /// Mass of sequences starting with `prefix` under prompt `c`'s mixture.
    fn prefix_mass(&self, c: usize, prefix: &[u32], weights: Option<&[f64]>, noise: f64) -> f64 {
        let weights = weights.unwrap_or(&self.answer_weights[c]);
        let symbols = (self.spec.vocab_size - 1) as f64;
        let answer_mass: f64 = self.answers[c]
            .iter()
            .zip(weights)
            .filter(|(a, _)| a.starts_with(prefix))
            .map(|(_, w)| w)
            .sum();
        (1.0 - noise) * answer_mass + noise * symbols.powi(-(prefix.len() as i32))
    }

    fn mixture_conditional(&self, c: usize, prefix: &[u32], weights: Option<&[f64]>, noise: f64) -> Result<ProbVector> {
        let k = self.spec.vocab_size;
        let mut next = vec![0.0; k];
        let mut ext = prefix.to_vec();
        ext.push(0);
        for v in 0..(k - 1) as u32 {
            *ext.last_mut().expect("pushed above") = v;
            next[v as usize] = self.prefix_mass(c, &ext, weights, noise);
        }
        ProbVector::from_weights(next)
    }

    /// Next-token distribution after `prefix` under prompt `c`.
    pub fn next_dist(&mut self, c: usize, prefix: &[u32]) -> Result<ProbVector> {
        let prompt = self.prompts[c].clone();
        let key = self.key(&prompt, prefix);
        if let Some(p) = self.cache.get(&key) {
            return Ok(p.clone());
        }
        let p = match self.spec.truth {
            TruthFamily::Dirichlet { alpha } => {
                let mut rng = rng_for(self.seed, STREAM_TRUTH_BASE + (stable_hash(&key.to_string()) >> 32));
                sample_dirichlet(self.spec.vocab_size, alpha, &mut rng)?
            }
            TruthFamily::MultiAnswer { .. } => self.mixture_conditional(c, prefix, None, self.noise)?,
        };
        self.cache.insert(key, p.clone());
        Ok(p)
    }

    /// Clean pre-training distribution: all answers equally likely, no noise.
    /// Dirichlet tasks pre-train on the truth itself.
    fn pretrain_dist(&mut self, c: usize, prefix: &[u32]) -> Result<ProbVector> {
        match self.spec.truth {
            TruthFamily::Dirichlet { .. } => self.next_dist(c, prefix),
            TruthFamily::MultiAnswer { n_answers, .. } => {
                let uniform = vec![1.0 / n_answers as f64; n_answers];
                self.mixture_conditional(c, prefix, Some(&uniform), 0.0)
            }
        }
    }

    fn draw_response(
        &mut self,
        c: usize,
        rng: &mut impl Rng,
        clean: bool,
    ) -> Result<Vec<u32>> {
        let mut response = Vec::with_capacity(self.spec.response_len);
        for _ in 0..self.spec.response_len {
            let p = if clean {
                self.pretrain_dist(c, &response)?
            } else {
                self.next_dist(c, &response)?
            };
            let u: f64 = rng.random();
            let mut cum = 0.0;
            let mut tok = argmax(p.as_slice());
            for (v, pv) in p.iter().enumerate() {
                cum += pv;
                if u < cum {
                    tok = v;
                    break;
                }
            }
            response.push(tok as u32);
            if tok == self.spec.vocab_size - 1 {
                break;
            }
        }
        Ok(response)
    }

    fn draw_corpus(&mut self, per_context: usize, stream: u64, clean: bool) -> Result<Vec<TokenSequence>> {
        let mut rng = rng_for(self.seed, stream);
        let mut out = Vec::with_capacity(per_context * self.prompts.len());
        for c in 0..self.prompts.len() {
            for _ in 0..per_context {
                let response = self.draw_response(c, &mut rng, clean)?;
                out.push(TokenSequence::new(self.prompts[c].clone(), response));
            }
        }
        Ok(out)
    }

    /// Most likely continuation under the truth, token by token.
    pub fn greedy_response(&mut self, c: usize) -> Result<Vec<u32>> {
        let mut response = Vec::new();
        for _ in 0..self.spec.response_len {
            let p = self.next_dist(c, &response)?;
            let tok = argmax(p.as_slice());
            response.push(tok as u32);
            if tok == self.spec.vocab_size - 1 {
                break;
            }
        }
        Ok(response)
    }

    /// Sum of truth log-probabilities of `response` after prompt `c`.
    pub fn loglik(&mut self, c: usize, response: &[u32]) -> Result<f64> {
        let mut total = 0.0;
        for t in 0..response.len().min(self.spec.response_len) {
            let p = self.next_dist(c, &response[..t])?;
            total += p[response[t] as usize].ln();
        }
        Ok(total)
    }
}

/// A generated task: training corpus, ground truth and evaluation data.
#[derive(Debug, Clone)]
pub struct Task {
    pub header: CorpusHeader,
    pub corpus: Vec<TokenSequence>,
    /// Truth next-token distribution for every training context.
    pub truth: BTreeMap<ContextKey, ProbVector>,
    pub pretrain_corpus: Vec<TokenSequence>,
    pub heldout: Vec<TokenSequence>,
    pub window: Option<usize>,
    pub process: TruthProcess,
}

impl Task {
    pub fn prompts(&self) -> &[Vec<u32>] {
        self.process.prompts()
    }
}

/// Samples a ground-truth process and a corpus from it. The same
/// `(spec, seed, heldout_per_context)` always yields the same task.
pub fn generate_task(spec: &TaskSpec, seed: u64, heldout_per_context: usize) -> Result<Task> {
    if spec.vocab_size < 3 {
        return Err(GemError::InvalidInput("vocab_size must be >= 3".into()));
    }
    let mut process = TruthProcess::new(spec, seed)?;
    let corpus = process.draw_corpus(spec.samples_per_context, STREAM_CORPUS, false)?;
    let pretrain_corpus = match &spec.pretrain {
        Some(p) => process.draw_corpus(p.samples_per_context, STREAM_PRETRAIN, true)?,
        None => Vec::new(),
    };
    let heldout = process.draw_corpus(heldout_per_context, STREAM_HELDOUT, false)?;

    let mut truth = BTreeMap::new();
    for c in 0..spec.n_contexts {
        // every prefix of every corpus response for this prompt
        let prompt = process.prompts()[c].clone();
        let responses: Vec<Vec<u32>> = corpus
            .iter()
            .filter(|s| s.prompt == prompt)
            .map(|s| s.response.clone())
            .collect();
        if responses.is_empty() {
            let p = process.next_dist(c, &[])?;
            truth.insert(ContextKey::from_prefix(&prompt, &[], spec.window), p);
        }
        for r in responses {
            for t in 0..r.len() {
                let p = process.next_dist(c, &r[..t])?;
                truth.insert(ContextKey::from_prefix(&prompt, &r[..t], spec.window), p);
            }
        }
    }
    debug_assert!(reset_expand(&corpus, spec.vocab_size, spec.window)
        .map(|pairs| pairs.iter().all(|(k, _)| truth.contains_key(k)))
        .unwrap_or(false) || corpus.is_empty());

    Ok(Task {
        header: CorpusHeader::new(spec.vocab_size),
        corpus,
        truth,
        pretrain_corpus,
        heldout,
        window: spec.window,
        process,
    })
}
