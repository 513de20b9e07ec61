//! Trains a single context on an exact target distribution and compares the
//! fixed point with the tempered target `p^beta / Z`.

use gemlab::models::{fit_exact, FitConfig};
use gemlab::{closed_form_equilibrium, sharpen, ContextKey, LossSpec, OptimizerConfig, OptimizerState, ProbVector, TabularModel};

fn main() -> gemlab::Result<()> {
    let p = ProbVector::new(vec![0.5, 0.25, 0.15, 0.07, 0.03])?;
    let ctx = ContextKey::new(vec![]);
    for beta in [1.0f64, 0.7, 0.3] {
        let mut model = TabularModel::new(p.len())?;
        let mut opt = OptimizerState::new(OptimizerConfig::sgd(beta.max(0.1)))?;
        let report = fit_exact(
            &mut model,
            &[(ctx.clone(), p.clone())],
            &LossSpec::gem(beta),
            &mut opt,
            &FitConfig { grad_tol: 1e-10, max_steps: 1_000_000 },
        )?;
        let f = model.probs(&ctx);
        let expect = closed_form_equilibrium(&p, beta)?;
        let dev = f.iter().zip(expect.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let back = sharpen(&model.row(&ctx), beta)?;
        println!("beta {beta}: {} steps, model {:.4?}", report.steps, f.as_slice());
        println!("  max deviation from p^beta/Z {dev:.2e}; sharpened back {:.4?}", back.as_slice());
    }
    Ok(())
}
