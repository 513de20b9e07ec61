//! Autoregressive training with data reset on a tiny corpus, then sampling
//! from the trained model.

use gemlab::metrics::{mean_conditional_entropy, perplexity};
use gemlab::sequential::{greedy_decode, reset_expand, sample_many, train_sequential, TrainConfig};
use gemlab::{DecodeConfig, LossSpec, OptimizerConfig, TokenSequence};

fn main() -> gemlab::Result<()> {
    // vocabulary 0..=4, token 4 ends a response
    let corpus = vec![
        TokenSequence::new(vec![0], vec![1, 2, 4]),
        TokenSequence::new(vec![0], vec![1, 3, 4]),
        TokenSequence::new(vec![0], vec![2, 2, 4]),
        TokenSequence::new(vec![1], vec![3, 4]),
    ];
    let vocab = 5;
    println!("reset-expanded pairs for the first sequence:");
    for (ctx, next) in reset_expand(&corpus[..1], vocab, Some(4))? {
        println!("  {ctx} -> {next}");
    }

    for spec in [LossSpec::ce(), LossSpec::gem(0.7)] {
        let mut cfg = TrainConfig::new(spec, OptimizerConfig::adam(0.1));
        cfg.epochs = 50;
        cfg.batch_size = 4;
        cfg.seed = 7;
        let (model, record) = train_sequential(&corpus, vocab, &cfg, None)?;
        let contexts: Vec<_> = model.contexts().cloned().collect();
        println!(
            "{}: {} steps, perplexity {:.3}, mean entropy {:.3}",
            spec.label(),
            record.steps.len(),
            perplexity(&model, &corpus, cfg.window)?,
            mean_conditional_entropy(&model, &contexts)?
        );
        let greedy = greedy_decode(&model, &[0], cfg.window, 4);
        println!("  greedy {:?}", greedy.response);
        for s in sample_many(&model, &[0], cfg.window, &DecodeConfig::new(4, 3), 5)? {
            println!("  sample {:?}", s.response);
        }
    }
    Ok(())
}
