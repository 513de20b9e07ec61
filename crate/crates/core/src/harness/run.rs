//! Training and evaluation of every grid cell of an experiment.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::dist::{entropy, forward_kl, max_abs_diff, sharpen};
use crate::error::{GemError, Result};
use crate::harness::config::{ExperimentConfig, GridCell, RewardId};
use crate::harness::report::{metric_rows, write_metrics_csv, write_summary_csv};
use crate::harness::task::{generate_task, stable_hash, Task};
use crate::losses::{HFunction, LossKind, LossSpec};
use crate::metrics::{
    best_of_n, bt_win_prob, mean_conditional_entropy, ngram_diversity, pass_at_k, perplexity,
    self_bleu_diversity, ResponseSet,
};
use crate::models::{
    closed_form_equilibrium, fit_exact, FitConfig, OptimizerState, TabularModel,
};
use crate::record::{RunRecord, StepScalars};
use crate::sequential::{sample_many, train_sequential, write_corpus, ContextKey, TrainConfig};

/// Records of one experiment plus the directory they were written to.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub dir: Option<PathBuf>,
    pub records: Vec<RunRecord>,
    pub models: Vec<Option<TabularModel>>,
}

/// How `run_experiment` should execute.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses rayon's default.
    pub jobs: usize,
    /// Force exact-expectation training even if the config does not ask for it.
    pub exact: bool,
    /// Root directory for artifacts; `None` keeps everything in memory.
    pub out_dir: Option<PathBuf>,
    /// Restrict the run to these cell names.
    pub cells: Option<Vec<String>>,
}

/// Inverse temperature at which the loss's fixed point is `p^beta / Z`,
/// when it has a closed form.
pub fn equilibrium_beta(spec: &LossSpec) -> Option<f64> {
    match spec.kind {
        LossKind::Ce => Some(1.0),
        LossKind::CeEntropy if spec.gamma == 0.0 => Some(1.0),
        LossKind::CeEntropy => None,
        LossKind::Gem if spec.h == HFunction::Linear && spec.beta > 0.0 => Some(spec.beta),
        LossKind::Gem => None,
    }
}

/// Cross-entropy pre-training on the task's clean corpus, when configured.
pub fn pretrain(config: &ExperimentConfig, task: &Task) -> Result<Option<TabularModel>> {
    let Some(p) = &config.task.pretrain else {
        return Ok(None);
    };
    if task.pretrain_corpus.is_empty() {
        return Ok(None);
    }
    let mut cfg = TrainConfig::new(LossSpec::ce(), p.optimizer);
    cfg.epochs = p.epochs;
    cfg.batch_size = p.batch_size;
    cfg.window = task.window;
    cfg.seed = config.seed ^ 0x9e37_79b9_7f4a_7c15;
    cfg.log_every = usize::MAX;
    let (model, _) = train_sequential(&task.pretrain_corpus, task.header.vocab_size, &cfg, None)?;
    // distances are measured from the pre-trained weights
    let rows = model
        .contexts()
        .map(|c| (c.clone(), model.row(c)))
        .collect();
    Ok(Some(TabularModel::from_rows(task.header.vocab_size, rows)?))
}

fn exact_cell(
    config: &ExperimentConfig,
    task: &Task,
    spec: &LossSpec,
    init: Option<TabularModel>,
) -> Result<(TabularModel, RunRecord)> {
    let settings = config.exact.unwrap_or_default();
    let targets: Vec<_> = task.truth.iter().map(|(c, p)| (c.clone(), p.clone())).collect();
    let mut model = match init {
        Some(m) => m,
        None => TabularModel::new(task.header.vocab_size)?,
    };
    let mut opt = OptimizerState::new(config.optimizer)?;
    let report = fit_exact(
        &mut model,
        &targets,
        spec,
        &mut opt,
        &FitConfig {
            grad_tol: settings.grad_tol,
            max_steps: settings.max_steps,
        },
    )?;
    let contexts: Vec<ContextKey> = task.truth.keys().cloned().collect();
    let mut record = RunRecord::new(*spec, config.seed);
    record.epochs.push(StepScalars {
        step: report.steps as u64,
        epoch: 0,
        loss: report.loss,
        grad_norm: report.grad_norm,
        entropy: mean_conditional_entropy(&model, &contexts)?,
        param_distance: model.param_distance(),
    });
    record
        .final_metrics
        .insert("converged".into(), if report.converged { 1.0 } else { 0.0 });
    record
        .final_metrics
        .insert("optimizer_steps".into(), report.steps as f64);
    Ok((model, record))
}

/// Trains one grid cell, starting from `init` when given.
pub fn train_cell(
    config: &ExperimentConfig,
    task: &Task,
    cell: &GridCell,
    init: Option<TabularModel>,
    exact: bool,
) -> Result<(TabularModel, RunRecord)> {
    if exact || config.exact.is_some() {
        return exact_cell(config, task, &cell.loss, init);
    }
    let mut cfg = TrainConfig::new(cell.loss, config.optimizer);
    cfg.schedule = config.schedule;
    cfg.epochs = config.epochs;
    cfg.batch_size = config.batch_size;
    cfg.window = task.window;
    cfg.seed = config.seed;
    cfg.log_every = config.log_every;
    train_sequential(&task.corpus, task.header.vocab_size, &cfg, init)
}

/// Decode seed for prompt `i`; shared by every cell so that cells are compared
/// on common random numbers.
fn decode_seed(config: &ExperimentConfig, i: usize) -> u64 {
    stable_hash(&format!("{}/{}/{}", config.seed, config.eval.decode.seed, i))
}

/// Evaluation metrics of a trained model.
pub fn evaluate(
    config: &ExperimentConfig,
    task: &Task,
    model: &TabularModel,
    spec: &LossSpec,
    exact: bool,
) -> Result<(BTreeMap<String, f64>, BTreeMap<usize, f64>)> {
    let mut m = BTreeMap::new();
    let contexts: Vec<ContextKey> = task.truth.keys().cloned().collect();
    m.insert(
        "mean_conditional_entropy".into(),
        mean_conditional_entropy(model, &contexts)?,
    );
    let truth_entropy =
        task.truth.values().map(entropy).sum::<f64>() / task.truth.len() as f64;
    m.insert("truth_entropy".into(), truth_entropy);
    m.insert("param_distance".into(), model.param_distance());
    let mut kl = 0.0;
    for (c, p) in &task.truth {
        kl += forward_kl(p, &model.probs(c))?;
    }
    m.insert("mean_kl_truth_model".into(), kl / task.truth.len() as f64);
    if !task.corpus.is_empty() {
        m.insert(
            "perplexity_train".into(),
            perplexity(model, &task.corpus, task.window)?,
        );
    }
    if !task.heldout.is_empty() {
        m.insert(
            "perplexity_heldout".into(),
            perplexity(model, &task.heldout, task.window)?,
        );
    }

    let positive = task.truth.values().all(|p| p.iter().all(|v| *v > 0.0));
    if exact && positive {
        if let Some(beta) = equilibrium_beta(spec) {
            let mut dev: f64 = 0.0;
            let mut sharpen_dev: f64 = 0.0;
            for (c, p) in &task.truth {
                let f = model.probs(c);
                dev = dev.max(max_abs_diff(f.as_slice(), closed_form_equilibrium(p, beta)?.as_slice()));
                let back = sharpen(&model.row(c), beta)?;
                sharpen_dev = sharpen_dev.max(max_abs_diff(back.as_slice(), p.as_slice()));
            }
            m.insert("equilibrium_max_dev".into(), dev);
            m.insert("sharpen_max_dev".into(), sharpen_dev);
        }
    }

    let eval = &config.eval;
    let n_prompts = eval.n_prompts.min(task.prompts().len());
    let mut pass = BTreeMap::new();
    if n_prompts == 0 {
        return Ok((m, pass));
    }
    let mut process = task.process.clone();
    let mut self_bleu = 0.0;
    let mut distinct = 0.0;
    let mut bon = 0.0;
    let mut mean_reward = 0.0;
    let mut win = 0.0;
    let mut pass_sum = vec![0.0; eval.ks.len()];
    for i in 0..n_prompts {
        let prompt = task.prompts()[i].clone();
        let mut decode = eval.decode;
        decode.seed = decode_seed(config, i);
        let samples = sample_many(model, &prompt, task.window, &decode, eval.n_samples)?;
        let tokens: Vec<&[u32]> = samples.iter().map(|s| s.response.as_slice()).collect();
        self_bleu += self_bleu_diversity(&tokens, eval.bleu_max_n)?;
        distinct += ngram_diversity(&tokens, eval.ngram_n)?;
        let Some(reward) = eval.reward else { continue };
        let rewards: Vec<f64> = samples
            .iter()
            .map(|s| match reward {
                RewardId::Verifier => Ok(if process.is_correct(i, &s.response) { 1.0 } else { 0.0 }),
                RewardId::TruthLoglik => process.loglik(i, &s.response),
            })
            .collect::<Result<_>>()?;
        let reference = process.greedy_response(i)?;
        let reference_reward = match reward {
            RewardId::Verifier => if process.is_correct(i, &reference) { 1.0 } else { 0.0 },
            RewardId::TruthLoglik => process.loglik(i, &reference)?,
        };
        mean_reward += rewards.iter().sum::<f64>() / rewards.len() as f64;
        let correct = rewards.iter().filter(|r| **r > 0.5).count() as u64;
        let set = ResponseSet::new(samples, Some(rewards))?;
        let (_, best) = best_of_n(&set)?;
        bon += best;
        win += bt_win_prob(best, reference_reward);
        if reward == RewardId::Verifier {
            for (slot, k) in pass_sum.iter_mut().zip(&eval.ks) {
                *slot += pass_at_k(eval.n_samples as u64, correct, *k as u64)?;
            }
        }
    }
    let n = n_prompts as f64;
    m.insert("self_bleu_diversity".into(), self_bleu / n);
    m.insert(format!("distinct_{}", eval.ngram_n), distinct / n);
    if eval.reward.is_some() {
        m.insert("mean_reward".into(), mean_reward / n);
        m.insert("best_of_n_reward".into(), bon / n);
        m.insert("win_prob_vs_truth_greedy".into(), win / n);
    }
    if eval.reward == Some(RewardId::Verifier) {
        for (k, s) in eval.ks.iter().zip(pass_sum) {
            pass.insert(*k, s / n);
        }
    }
    Ok((m, pass))
}

fn run_one(
    config: &ExperimentConfig,
    task: &Task,
    cell: &GridCell,
    init: Option<&TabularModel>,
    exact: bool,
) -> Result<(TabularModel, RunRecord)> {
    let start = Instant::now();
    let exact = exact || config.exact.is_some();
    let (model, mut record) = train_cell(config, task, cell, init.cloned(), exact)?;
    let (metrics, pass) = evaluate(config, task, &model, &cell.loss, exact)?;
    record.final_metrics.extend(metrics);
    record.pass_at_k = pass;
    record.wall_time_secs = start.elapsed().as_secs_f64();
    Ok((model, record))
}

fn write_cell(dir: &Path, model: Option<&TabularModel>, record: &mut RunRecord) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let model_path = dir.join("model.json");
    let metrics_path = dir.join("metrics.csv");
    let run_path = dir.join("run.jsonl");
    if let Some(model) = model {
        model.save(&model_path)?;
        record.artifacts.push(model_path.display().to_string());
    }
    write_metrics_csv(&metrics_path, &metric_rows(std::slice::from_ref(record)))?;
    record.artifacts.push(metrics_path.display().to_string());
    record.artifacts.push(run_path.display().to_string());
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    std::fs::write(&run_path, line)?;
    Ok(())
}

/// Runs every (selected) grid cell. A failing cell yields a failed record and
/// never affects its siblings. Results do not depend on `opts.jobs`.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    config.validate()?;
    let cells: Vec<&GridCell> = match &opts.cells {
        None => config.grid.iter().collect(),
        Some(names) => {
            let picked: Vec<&GridCell> = config
                .grid
                .iter()
                .filter(|c| names.contains(&c.cell_name()))
                .collect();
            if picked.len() != names.len() {
                return Err(GemError::Config(format!(
                    "unknown cell in {names:?}; available: {:?}",
                    config.cell_names()
                )));
            }
            picked
        }
    };
    let hash = config.hash();
    let root = opts.out_dir.as_ref().map(|d| d.join(&hash));
    if let Some(root) = &root {
        std::fs::create_dir_all(root)?;
        std::fs::write(root.join("config.json"), config.to_json())?;
    }

    let task = generate_task(&config.task, config.seed, config.eval.heldout_per_context)?;
    if let Some(root) = &root {
        write_corpus(&root.join("corpus.jsonl"), &task.header, &task.corpus)?;
    }
    let init = pretrain(config, &task)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| GemError::InvalidParameter(format!("thread pool: {e}")))?;
    let results: Vec<(RunRecord, Option<TabularModel>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let name = cell.cell_name();
                let outcome = catch_unwind(AssertUnwindSafe(|| {
                    run_one(config, &task, cell, init.as_ref(), opts.exact)
                }));
                let (mut record, model) = match outcome {
                    Ok(Ok((model, record))) => (record, Some(model)),
                    Ok(Err(e)) => (RunRecord::failed(&name, cell.loss, config.seed, e.to_string()), None),
                    Err(panic) => {
                        let msg = panic
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_else(|| "panic".into());
                        (RunRecord::failed(&name, cell.loss, config.seed, msg), None)
                    }
                };
                record.cell = name.clone();
                record.config_hash = hash.clone();
                if let Some(root) = &root {
                    if let Err(e) = write_cell(&root.join(&name), model.as_ref(), &mut record) {
                        record = RunRecord::failed(&name, cell.loss, config.seed, e.to_string());
                        record.config_hash = hash.clone();
                    }
                }
                (record, model)
            })
            .collect()
    });
    let (records, models): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    if let Some(root) = &root {
        let mut lines = String::new();
        for r in &records {
            lines.push_str(&serde_json::to_string(r)?);
            lines.push('\n');
        }
        std::fs::write(root.join("runs.jsonl"), lines)?;
        write_summary_csv(&root.join("summary.csv"), &records)?;
    }
    Ok(ExperimentOutput {
        dir: root,
        records,
        models,
    })
}

/// Reads the records of a finished experiment directory.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(dir.join("runs.jsonl"))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
