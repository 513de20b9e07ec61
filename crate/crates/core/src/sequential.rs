//! Autoregressive tabular models: the data-reset expansion, teacher-forced
//! training, and decoding.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{argmax, softmax, LogitVector, ProbVector};
use crate::error::{GemError, Result};
use crate::losses::LossSpec;
use crate::metrics::mean_conditional_entropy;
use crate::models::{
    fit_exact, train_step, FitConfig, OptimizerConfig, OptimizerState, TabularModel, Target,
};
use crate::record::{RunRecord, StepScalars};

pub const CORPUS_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_WINDOW: usize = 4;

/// Conditioning prefix (prompt followed by the response so far), truncated
/// to the last `window` tokens.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ContextKey(Vec<u32>);

impl ContextKey {
    pub fn new(tokens: Vec<u32>) -> Self {
        Self(tokens)
    }

    pub fn from_prefix(prompt: &[u32], response_prefix: &[u32], window: Option<usize>) -> Self {
        let full: Vec<u32> = prompt.iter().chain(response_prefix).copied().collect();
        match window {
            Some(w) if full.len() > w => Self(full[full.len() - w..].to_vec()),
            _ => Self(full),
        }
    }

    pub fn tokens(&self) -> &[u32] {
        &self.0
    }
}

impl fmt::Display for ContextKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl FromStr for ContextKey {
    type Err = GemError;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Ok(Self::default());
        }
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<u32>()
                    .map_err(|e| GemError::InvalidInput(format!("bad context key {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl Serialize for ContextKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ContextKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenSequence {
    pub prompt: Vec<u32>,
    pub response: Vec<u32>,
}

impl TokenSequence {
    pub fn new(prompt: Vec<u32>, response: Vec<u32>) -> Self {
        Self { prompt, response }
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        for t in self.prompt.iter().chain(&self.response) {
            if *t as usize >= vocab_size {
                return Err(GemError::OutOfRange {
                    index: *t as usize,
                    size: vocab_size,
                });
            }
        }
        Ok(())
    }
}

/// Sidecar header stored next to a corpus file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusHeader {
    pub format_version: u32,
    pub vocab_size: usize,
    pub eos_id: u32,
}

impl CorpusHeader {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            format_version: CORPUS_FORMAT_VERSION,
            vocab_size,
            eos_id: (vocab_size - 1) as u32,
        }
    }
}

/// `corpus.jsonl` -> `corpus.header.json`.
pub fn header_path(corpus: &Path) -> PathBuf {
    corpus.with_extension("header.json")
}

pub fn write_corpus(path: &Path, header: &CorpusHeader, data: &[TokenSequence]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for seq in data {
        serde_json::to_writer(&mut out, seq)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    std::fs::write(header_path(path), serde_json::to_string_pretty(header)?)?;
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<(CorpusHeader, Vec<TokenSequence>)> {
    let header: CorpusHeader =
        serde_json::from_str(&std::fs::read_to_string(header_path(path))?)?;
    if header.format_version != CORPUS_FORMAT_VERSION {
        return Err(GemError::InvalidInput(format!(
            "unsupported corpus format version {}",
            header.format_version
        )));
    }
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut data = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let seq: TokenSequence = serde_json::from_str(&line)?;
        seq.validate(header.vocab_size)?;
        data.push(seq);
    }
    Ok((header, data))
}

/// Data reset: one `(prompt + y[..t], y[t])` pair per response position, in
/// order. Contexts are always built from data tokens, never from samples.
pub fn reset_expand(
    data: &[TokenSequence],
    vocab_size: usize,
    window: Option<usize>,
) -> Result<Vec<(ContextKey, usize)>> {
    let mut pairs = Vec::with_capacity(data.iter().map(|s| s.response.len()).sum());
    for seq in data {
        seq.validate(vocab_size)?;
        for t in 0..seq.response.len() {
            let key = ContextKey::from_prefix(&seq.prompt, &seq.response[..t], window);
            pairs.push((key, seq.response[t] as usize));
        }
    }
    Ok(pairs)
}

/// Per-context empirical next-token distributions of reset-expanded pairs.
pub fn empirical_targets(
    pairs: &[(ContextKey, usize)],
    vocab_size: usize,
) -> Result<Vec<(ContextKey, ProbVector)>> {
    let mut counts: BTreeMap<&ContextKey, Vec<f64>> = BTreeMap::new();
    for (ctx, y) in pairs {
        counts.entry(ctx).or_insert_with(|| vec![0.0; vocab_size])[*y] += 1.0;
    }
    counts
        .into_iter()
        .map(|(ctx, c)| Ok((ctx.clone(), ProbVector::from_weights(c)?)))
        .collect()
}

/// Distinct training contexts of reset-expanded pairs, sorted.
pub fn distinct_contexts(pairs: &[(ContextKey, usize)]) -> Vec<ContextKey> {
    let mut keys: Vec<ContextKey> = pairs.iter().map(|(c, _)| c.clone()).collect();
    keys.sort();
    keys.dedup();
    keys
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    #[default]
    Constant,
    /// Linear warm-up over `warmup_ratio` of the steps, then cosine decay to 0.
    Cosine { warmup_ratio: f64 },
}

impl Schedule {
    pub fn lr_at(&self, base: f64, step: usize, total: usize) -> f64 {
        match *self {
            Schedule::Constant => base,
            Schedule::Cosine { warmup_ratio } => {
                let warmup = (warmup_ratio * total as f64).ceil() as usize;
                if step < warmup {
                    return base * (step + 1) as f64 / warmup as f64;
                }
                let span = total.saturating_sub(warmup).max(1) as f64;
                let progress = (step - warmup) as f64 / span;
                base * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrainMode {
    /// Shuffled mini-batches of observed labels.
    Sampled,
    /// Full-batch training on per-context label frequencies until convergence.
    Exact { max_steps: usize, grad_tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub spec: LossSpec,
    pub optimizer: OptimizerConfig,
    pub schedule: Schedule,
    pub epochs: usize,
    pub batch_size: usize,
    pub window: Option<usize>,
    pub seed: u64,
    pub mode: TrainMode,
    /// Scalars are recorded every `log_every` optimizer steps.
    pub log_every: usize,
}

impl TrainConfig {
    pub fn new(spec: LossSpec, optimizer: OptimizerConfig) -> Self {
        Self {
            spec,
            optimizer,
            schedule: Schedule::Constant,
            epochs: 1,
            batch_size: 16,
            window: Some(DEFAULT_WINDOW),
            seed: 0,
            mode: TrainMode::Sampled,
            log_every: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.optimizer.validate()?;
        if self.batch_size == 0 || self.log_every == 0 {
            return Err(GemError::InvalidParameter(
                "batch_size and log_every must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn scalars(
    model: &TabularModel,
    contexts: &[ContextKey],
    step: u64,
    epoch: usize,
    loss: f64,
    grad_norm: f64,
) -> StepScalars {
    StepScalars {
        step,
        epoch,
        loss,
        grad_norm,
        entropy: mean_conditional_entropy(model, contexts).unwrap_or(f64::NAN),
        param_distance: model.param_distance(),
    }
}

/// Reset-expands `data` and trains a tabular model on the resulting pairs.
/// Starts from `init` when given, otherwise from zero logits.
pub fn train_sequential(
    data: &[TokenSequence],
    vocab_size: usize,
    cfg: &TrainConfig,
    init: Option<TabularModel>,
) -> Result<(TabularModel, RunRecord)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(GemError::InvalidInput("empty training corpus".into()));
    }
    let pairs = reset_expand(data, vocab_size, cfg.window)?;
    if pairs.is_empty() {
        return Err(GemError::InvalidInput("corpus has no response tokens".into()));
    }
    let contexts = distinct_contexts(&pairs);
    let mut model = match init {
        Some(m) if m.vocab_size() != vocab_size => {
            return Err(GemError::InvalidInput(
                "initial model has a different vocabulary size".into(),
            ))
        }
        Some(m) => m,
        None => TabularModel::new(vocab_size)?,
    };
    let mut opt = OptimizerState::new(cfg.optimizer)?;
    let mut record = RunRecord::new(cfg.spec, cfg.seed);

    match cfg.mode {
        TrainMode::Sampled => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let per_epoch = pairs.len().div_ceil(cfg.batch_size);
            let total = per_epoch * cfg.epochs;
            let mut order: Vec<u32> = (0..pairs.len() as u32).collect();
            let mut step = 0usize;
            for epoch in 0..cfg.epochs {
                order.shuffle(&mut rng);
                record.batch_order.push(order.clone());
                let mut epoch_loss = 0.0;
                let mut last = None;
                for chunk in order.chunks(cfg.batch_size) {
                    let batch: Vec<(ContextKey, Target)> = chunk
                        .iter()
                        .map(|i| {
                            let (c, y) = &pairs[*i as usize];
                            (c.clone(), Target::Label(*y))
                        })
                        .collect();
                    opt.lr = cfg.schedule.lr_at(cfg.optimizer.lr, step, total);
                    let stats = train_step(&mut model, &batch, &cfg.spec, &mut opt)?;
                    step += 1;
                    epoch_loss += stats.loss * chunk.len() as f64;
                    if step % cfg.log_every == 0 {
                        record.steps.push(scalars(
                            &model,
                            &contexts,
                            step as u64,
                            epoch,
                            stats.loss,
                            stats.grad_norm,
                        ));
                    }
                    last = Some(stats);
                }
                let grad_norm = last.map_or(f64::NAN, |s| s.grad_norm);
                record.epochs.push(scalars(
                    &model,
                    &contexts,
                    step as u64,
                    epoch,
                    epoch_loss / pairs.len() as f64,
                    grad_norm,
                ));
            }
        }
        TrainMode::Exact {
            max_steps,
            grad_tol,
        } => {
            let targets = empirical_targets(&pairs, vocab_size)?;
            let report = fit_exact(
                &mut model,
                &targets,
                &cfg.spec,
                &mut opt,
                &FitConfig {
                    grad_tol,
                    max_steps,
                },
            )?;
            record.epochs.push(scalars(
                &model,
                &contexts,
                report.steps as u64,
                0,
                report.loss,
                report.grad_norm,
            ));
            record
                .final_metrics
                .insert("converged".into(), if report.converged { 1.0 } else { 0.0 });
        }
    }
    record.final_metrics.insert(
        "mean_conditional_entropy".into(),
        mean_conditional_entropy(&model, &contexts)?,
    );
    record
        .final_metrics
        .insert("param_distance".into(), model.param_distance());
    record
        .final_metrics
        .insert("optimizer_steps".into(), opt.steps() as f64);
    Ok((model, record))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeConfig {
    pub temperature: f64,
    /// Keep only the `top_k` most likely tokens; 0 disables the filter.
    #[serde(default)]
    pub top_k: usize,
    #[serde(default = "one")]
    pub top_p: f64,
    pub max_len: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl DecodeConfig {
    pub fn new(max_len: usize, seed: u64) -> Self {
        Self {
            temperature: 1.0,
            top_k: 0,
            top_p: 1.0,
            max_len,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(GemError::InvalidParameter(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GemError::InvalidParameter(format!(
                "top_p must lie in (0, 1], got {}",
                self.top_p
            )));
        }
        Ok(())
    }
}

/// The filtered next-token distribution as `(token, prob)` pairs in
/// decreasing probability order: temperature, then top-k, then top-p.
pub fn filtered_distribution(logits: &LogitVector, cfg: &DecodeConfig) -> Vec<(usize, f64)> {
    let scaled: Vec<f64> = logits.iter().map(|v| v / cfg.temperature).collect();
    let probs = softmax(&LogitVector::new(scaled).expect("scaled logits stay finite"));
    let mut ranked: Vec<(usize, f64)> = probs.iter().copied().enumerate().collect();
    // stable sort keeps lower indices first among equal probabilities
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    if cfg.top_k > 0 {
        ranked.truncate(cfg.top_k);
    }
    let mass: f64 = ranked.iter().map(|(_, p)| p).sum();
    for entry in ranked.iter_mut() {
        entry.1 /= mass;
    }
    if cfg.top_p < 1.0 {
        let mut cum = 0.0;
        let mut keep = ranked.len();
        for (n, (_, p)) in ranked.iter().enumerate() {
            cum += p;
            if cum >= cfg.top_p {
                keep = n + 1;
                break;
            }
        }
        ranked.truncate(keep);
        let mass: f64 = ranked.iter().map(|(_, p)| p).sum();
        for entry in ranked.iter_mut() {
            entry.1 /= mass;
        }
    }
    ranked
}

fn draw(dist: &[(usize, f64)], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (tok, p) in dist {
        cum += p;
        if u < cum {
            return *tok;
        }
    }
    dist.last().expect("filtered distribution is never empty").0
}

fn eos(model: &TabularModel) -> u32 {
    (model.vocab_size() - 1) as u32
}

fn decode_with(
    model: &TabularModel,
    prompt: &[u32],
    window: Option<usize>,
    max_len: usize,
    mut pick: impl FnMut(&LogitVector) -> usize,
) -> TokenSequence {
    let eos = eos(model);
    let mut response = Vec::new();
    while response.len() < max_len {
        let ctx = ContextKey::from_prefix(prompt, &response, window);
        let tok = pick(&model.row(&ctx)) as u32;
        response.push(tok);
        if tok == eos {
            break;
        }
    }
    TokenSequence::new(prompt.to_vec(), response)
}

fn sample_with_rng(
    model: &TabularModel,
    prompt: &[u32],
    window: Option<usize>,
    cfg: &DecodeConfig,
    rng: &mut ChaCha8Rng,
) -> TokenSequence {
    decode_with(model, prompt, window, cfg.max_len, |logits| {
        draw(&filtered_distribution(logits, cfg), rng)
    })
}

/// Draws one continuation of `prompt`. The end-of-sequence token is the last
/// vocabulary id; generation stops after emitting it or at `max_len`.
pub fn sample(
    model: &TabularModel,
    prompt: &[u32],
    window: Option<usize>,
    cfg: &DecodeConfig,
) -> Result<TokenSequence> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(sample_with_rng(model, prompt, window, cfg, &mut rng))
}

/// `n` independent samples; sample `i` uses its own ChaCha stream `i`, so the
/// result does not depend on how the work is spread across threads.
pub fn sample_many(
    model: &TabularModel,
    prompt: &[u32],
    window: Option<usize>,
    cfg: &DecodeConfig,
    n: usize,
) -> Result<Vec<TokenSequence>> {
    cfg.validate()?;
    Ok((0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i);
            sample_with_rng(model, prompt, window, cfg, &mut rng)
        })
        .collect())
}

/// Argmax decoding with lowest-index tie-breaking.
pub fn greedy_decode(
    model: &TabularModel,
    prompt: &[u32],
    window: Option<usize>,
    max_len: usize,
) -> TokenSequence {
    decode_with(model, prompt, window, max_len, |logits| argmax(logits.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::OptimizerConfig;

    fn seq(prompt: &[u32], response: &[u32]) -> TokenSequence {
        TokenSequence::new(prompt.to_vec(), response.to_vec())
    }

    fn key(t: &[u32]) -> ContextKey {
        ContextKey::new(t.to_vec())
    }

    #[test]
    fn reset_expand_builds_data_prefixes() {
        let pairs = reset_expand(&[seq(&[7], &[1, 2, 3])], 8, None).unwrap();
        assert_eq!(
            pairs,
            vec![(key(&[7]), 1), (key(&[7, 1]), 2), (key(&[7, 1, 2]), 3)]
        );
        assert!(reset_expand(&[seq(&[7], &[])], 8, None).unwrap().is_empty());
        let data = vec![seq(&[0], &[1, 2]); 5];
        assert_eq!(reset_expand(&data, 4, None).unwrap().len(), 10);
        assert!(reset_expand(&[seq(&[0], &[9])], 4, None).is_err());
    }

    #[test]
    fn window_truncates_prefix() {
        let k = ContextKey::from_prefix(&[1, 2, 3], &[4, 5], Some(3));
        assert_eq!(k, key(&[3, 4, 5]));
        assert_eq!(ContextKey::from_prefix(&[1], &[2], Some(4)), key(&[1, 2]));
    }

    #[test]
    fn context_key_text_round_trip() {
        for k in [key(&[]), key(&[0]), key(&[3, 10, 2])] {
            assert_eq!(k.to_string().parse::<ContextKey>().unwrap(), k);
        }
        assert!("1,x".parse::<ContextKey>().is_err());
    }

    #[test]
    fn cosine_schedule_shape() {
        let s = Schedule::Cosine { warmup_ratio: 0.1 };
        assert!((s.lr_at(1.0, 0, 100) - 0.1).abs() < 1e-12);
        assert!((s.lr_at(1.0, 9, 100) - 1.0).abs() < 1e-12);
        assert!((s.lr_at(1.0, 10, 100) - 1.0).abs() < 1e-12);
        assert!(s.lr_at(1.0, 99, 100) < 0.01);
        assert_eq!(Schedule::Constant.lr_at(0.5, 40, 100), 0.5);
    }

    #[test]
    fn filtering_order() {
        let logits = LogitVector::from_probs(&ProbVector::new(vec![0.1, 0.5, 0.3, 0.1]).unwrap()).unwrap();
        let cfg = DecodeConfig {
            top_k: 3,
            top_p: 0.8,
            ..DecodeConfig::new(4, 0)
        };
        let d = filtered_distribution(&logits, &cfg);
        // top-3 keeps {1, 2, 0} renormalized to 5/9, 3/9, 1/9; top-p 0.8 keeps {1, 2}
        assert_eq!(d.iter().map(|e| e.0).collect::<Vec<_>>(), vec![1, 2]);
        assert!((d[0].1 - 0.625).abs() < 1e-12);

        let top1 = DecodeConfig {
            top_k: 1,
            temperature: 5.0,
            ..DecodeConfig::new(4, 0)
        };
        assert_eq!(filtered_distribution(&logits, &top1), vec![(1, 1.0)]);
    }

    #[test]
    fn greedy_on_uniform_model_emits_zeros() {
        let m = TabularModel::new(5).unwrap();
        let out = greedy_decode(&m, &[2], Some(4), 6);
        assert_eq!(out.response, vec![0; 6]);
    }

    #[test]
    fn greedy_stops_at_eos() {
        let mut m = TabularModel::new(4).unwrap();
        m.set_row(&key(&[0]), LogitVector::new(vec![0.0, 5.0, 0.0, 0.0]).unwrap()).unwrap();
        m.set_row(&key(&[0, 1]), LogitVector::new(vec![0.0, 0.0, 0.0, 5.0]).unwrap()).unwrap();
        assert_eq!(greedy_decode(&m, &[0], None, 10).response, vec![1, 3]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let mut m = TabularModel::new(6).unwrap();
        m.set_row(&key(&[1]), LogitVector::new(vec![0.3, 0.1, -0.2, 0.5, 0.0, -1.0]).unwrap()).unwrap();
        let cfg = DecodeConfig::new(5, 42);
        let a = sample(&m, &[1], Some(2), &cfg).unwrap();
        let b = sample(&m, &[1], Some(2), &cfg).unwrap();
        assert_eq!(a, b);
        let many = sample_many(&m, &[1], Some(2), &cfg, 16).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| sample_many(&m, &[1], Some(2), &cfg, 16).unwrap());
        assert_eq!(many, single);
    }

    #[test]
    fn top_k_one_is_greedy() {
        let mut m = TabularModel::new(5).unwrap();
        m.set_row(&key(&[]), LogitVector::new(vec![0.0, 0.2, 1.0, 0.9, 0.1]).unwrap()).unwrap();
        m.set_row(&key(&[2]), LogitVector::new(vec![0.0, 0.2, 0.0, 0.9, 2.0]).unwrap()).unwrap();
        let cfg = DecodeConfig {
            top_k: 1,
            temperature: 3.0,
            ..DecodeConfig::new(5, 9)
        };
        let s = sample(&m, &[], Some(1), &cfg).unwrap();
        assert_eq!(s, greedy_decode(&m, &[], Some(1), 5));
        let cold = DecodeConfig {
            temperature: 1e-6,
            ..DecodeConfig::new(5, 9)
        };
        assert_eq!(sample(&m, &[], Some(1), &cold).unwrap(), greedy_decode(&m, &[], Some(1), 5));
    }

    #[test]
    fn ce_memorizes_deterministic_corpus() {
        let data = vec![seq(&[0], &[1, 2, 3]), seq(&[1], &[2, 0, 3])];
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 3,
            window: None,
            ..TrainConfig::new(LossSpec::ce(), OptimizerConfig::adam(0.1))
        };
        let (model, record) = train_sequential(&data, 4, &cfg, None).unwrap();
        assert_eq!(greedy_decode(&model, &[0], None, 5).response, vec![1, 2, 3]);
        assert_eq!(greedy_decode(&model, &[1], None, 5).response, vec![2, 0, 3]);
        let ppl = crate::metrics::perplexity(&model, &data, None).unwrap();
        assert!(ppl < 1.01, "{ppl}");
        assert_eq!(record.batch_order.len(), 200);
        assert_eq!(record.epochs.len(), 200);
    }

    #[test]
    fn corpus_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let data = vec![seq(&[0, 1], &[2, 3]), seq(&[], &[1])];
        write_corpus(&path, &CorpusHeader::new(4), &data).unwrap();
        assert!(dir.path().join("corpus.header.json").exists());
        let (header, back) = read_corpus(&path).unwrap();
        assert_eq!(header.eos_id, 3);
        assert_eq!(back, data);
    }
}
