//! Logit flows of one cross-entropy step on a four-token distribution, then
//! the two flow-following iterations run to completion.

use gemlab::flow::{ce_gradient, flow_decompose, run_ce_iteration, run_gem_prototype, IterationConfig};
use gemlab::losses::gem_flows;
use gemlab::{entropy, softmax, LogitVector, LossSpec, ProbVector};

fn main() -> gemlab::Result<()> {
    let f = ProbVector::new(vec![0.4, 0.3, 0.2, 0.1])?;
    let logits = LogitVector::new(f.iter().map(|p| p.ln()).collect())?;
    let target = 2;

    let d = flow_decompose(&f, target)?;
    for flow in &d.flows {
        println!("{} <- {}  weight {:.3}", flow.target, flow.source, flow.weight);
    }
    println!("ascent direction {:?}", ce_gradient(&f, target)?);

    let gem = gem_flows(&logits, target, &LossSpec::gem(0.7))?;
    println!("gem flows (beta 0.7):");
    for flow in &gem.flows {
        println!("  {} <- {}  weight {:.4}", flow.target, flow.source, flow.weight);
    }

    let cfg = IterationConfig::new(1.0, 100_000);
    let ce = run_ce_iteration(&logits, target, &cfg)?;
    let proto = run_gem_prototype(&logits, target, &cfg)?;
    println!(
        "ce iteration: {} steps, {:?}, entropy {:.2e}",
        ce.steps_taken,
        ce.terminated_by,
        ce.final_entropy()
    );
    println!(
        "gem prototype: {} steps, {:?}, entropy {:.3} (start {:.3})",
        proto.steps_taken,
        proto.terminated_by,
        proto.final_entropy(),
        entropy(&softmax(&logits))
    );
    println!("final probabilities {:?}", proto.final_probs().as_slice());
    Ok(())
}
