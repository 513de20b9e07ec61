//! Runs a small grid in memory and prints a few summary metrics per cell.
//! Pass a config path to run that instead.

use gemlab::harness::{run_experiment, ExperimentConfig, RunOptions};

const SMALL: &str = r#"{
    "name": "example",
    "seed": 3,
    "task": {
        "vocab_size": 12, "n_contexts": 16, "prompt_len": 2, "response_len": 1,
        "samples_per_context": 16, "truth": {"kind": "dirichlet", "alpha": 0.3}
    },
    "grid": [
        {"loss": {"kind": "ce"}},
        {"loss": {"kind": "ce_entropy", "gamma": 0.1}},
        {"loss": {"kind": "gem", "beta": 0.7}},
        {"loss": {"kind": "gem", "beta": 0.7, "h": "log_sigmoid", "h_scale": 0.01}}
    ],
    "optimizer": {"kind": "sgd", "lr": 8.0},
    "epochs": 3,
    "batch_size": 16,
    "eval": {
        "n_prompts": 8, "n_samples": 16, "ks": [1, 4, 16],
        "decode": {"temperature": 1.0, "top_k": 0, "top_p": 1.0, "max_len": 1, "seed": 0},
        "reward": "truth_loglik", "ngram_n": 1, "bleu_max_n": 1, "heldout_per_context": 4
    }
}"#;

fn main() -> gemlab::Result<()> {
    let config = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => ExperimentConfig::from_json(SMALL)?,
    };
    let out = run_experiment(&config, &RunOptions::default())?;
    println!("{:<28} {:>10} {:>10} {:>12} {:>10}", "cell", "entropy", "distance", "ppl heldout", "bo16");
    for r in &out.records {
        let m = |k: &str| r.final_metrics.get(k).copied().unwrap_or(f64::NAN);
        println!(
            "{:<28} {:>10.4} {:>10.4} {:>12.4} {:>10.4}",
            r.cell,
            m("mean_conditional_entropy"),
            m("param_distance"),
            m("perplexity_heldout"),
            m("best_of_n_reward"),
        );
    }
    Ok(())
}
