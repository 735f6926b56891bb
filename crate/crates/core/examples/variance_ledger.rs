//! The asymptotic variance ledger: normalizers, oscillation bounds, V_t and the
//! concentration constants, for the reference model and test function 1{x = 1}.

use smc_mdp::model::{FiniteHmm, ObservationSequence};
use smc_mdp::theory::TheoryContext;

fn main() -> smc_mdp::error::Result<()> {
    let model = FiniteHmm::coin2();
    let obs = ObservationSequence::new(vec![1.0, 1.0, 0.0])?;
    let ctx = TheoryContext::new(&model, &obs)?;
    let ledger = ctx.ledger(&[0.0, 1.0])?;
    println!(
        "{:>3} {:>8} {:>8} {:>9} {:>9} {:>9} {:>6} {:>10}",
        "t", "kappa", "gamma", "m", "sigma^2", "V", "alpha", "beta"
    );
    for (e, c) in ledger.entries.iter().zip(&ledger.concentration) {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!(
            "{:>3} {:>8} {:>8} {:>9.6} {:>9.6} {:>9.6} {:>6} {:>10.2}",
            e.t,
            opt(e.kappa),
            opt(e.gamma),
            e.m,
            e.sigma_sq,
            e.v,
            c.alpha,
            c.beta
        );
    }
    println!("\ncovariance matrix of (psi, .., psi):");
    for row in &ledger.matrix {
        println!(
            "  {}",
            row.iter().map(|v| format!("{v:>9.5}")).collect::<String>()
        );
    }
    Ok(())
}
