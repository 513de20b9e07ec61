//! Diversity, best-of-n and pass@k on hand-written response sets.

use gemlab::metrics::{best_of_n, bt_win_prob, ngram_diversity, pass_at_k, self_bleu_diversity, ResponseSet};
use gemlab::TokenSequence;

fn main() -> gemlab::Result<()> {
    let varied: Vec<Vec<u32>> = vec![vec![1, 2, 3, 4], vec![4, 3, 2, 1], vec![1, 3, 5, 7], vec![2, 4, 6, 8]];
    let repetitive: Vec<Vec<u32>> = vec![vec![1, 2, 1, 2], vec![1, 2, 1, 2], vec![1, 2, 1, 3], vec![1, 2, 1, 2]];
    for (name, set) in [("varied", &varied), ("repetitive", &repetitive)] {
        let refs: Vec<&[u32]> = set.iter().map(Vec::as_slice).collect();
        println!(
            "{name}: distinct-2 {:.1}  self-bleu diversity {:.1}",
            ngram_diversity(&refs, 2)?,
            self_bleu_diversity(&refs, 4)?
        );
    }

    let responses: Vec<TokenSequence> = varied.iter().map(|r| TokenSequence::new(vec![0], r.clone())).collect();
    let set = ResponseSet::new(responses, Some(vec![0.2, 1.5, -0.3, 0.9]))?;
    let (best, reward) = best_of_n(&set)?;
    println!("best of {}: response {best} with reward {reward}", set.responses.len());
    println!("win probability against a reward-0 baseline {:.3}", bt_win_prob(reward, 0.0));

    let (n, c) = (32, 5);
    for k in [1, 2, 4, 8, 16, 32] {
        println!("pass@{k:<2} with {c}/{n} correct: {:.4}", pass_at_k(n, c, k)?);
    }
    Ok(())
}
