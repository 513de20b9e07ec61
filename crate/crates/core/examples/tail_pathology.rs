//! How hard each regularizer pushes up a token that the model already
//! treats as nearly impossible.

use gemlab::losses::{gem_q, loss_and_ascent};
use gemlab::{LogitVector, LossSpec, ProbVector};

fn main() -> gemlab::Result<()> {
    let (beta, gamma) = (0.7, 0.1);
    for tiny in [1e-2, 1e-4, 1e-6, 1e-9] {
        let rest = (1.0 - tiny) / 3.0;
        let f = ProbVector::new(vec![rest, rest, rest, tiny])?;
        let logits = LogitVector::new(f.iter().map(|p| p.ln()).collect())?;
        let j = 3;

        let entropy_push = (1.0 + tiny.ln()).abs();
        let q = gem_q(&logits, beta)?;
        let gem_weight = q[j] / f[j];
        println!(
            "f(j)={tiny:.0e}  entropy term {entropy_push:8.3}  gem q/f {gem_weight:.3e}  ratio {:.1}",
            entropy_push / gem_weight
        );

        let (_, ce_ent) = loss_and_ascent(&logits, 0, &LossSpec::ce_entropy(gamma))?;
        let (_, gem) = loss_and_ascent(&logits, 0, &LossSpec::gem(beta))?;
        println!("    ascent on j: ce+entropy {:+.3e}  gem {:+.3e}", ce_ent[j], gem[j]);
    }
    Ok(())
}
