//! The particle filter on the stochastic volatility model, against the grid filter.

use smc_mdp::model::{simulate_trajectory, ModelSpec, ObservationSequence};
use smc_mdp::particle::{particle_moments, ParticleFilter};
use smc_mdp::stream::seeded;
use smc_mdp::theory::TheoryContext;

fn main() -> smc_mdp::error::Result<()> {
    let ModelSpec::Continuous(model) = ModelSpec::builtin("stoch_vol")? else {
        unreachable!("stoch_vol is a continuous model")
    };
    let (states, obs): (Vec<f64>, ObservationSequence) =
        simulate_trajectory(&model, 8, &mut seeded(11))?;
    let ctx = TheoryContext::new(&model, &obs)?;
    let identity = ctx.eval(|x| x);
    let pf = ParticleFilter::new(&model, &obs)?;
    let n = 5_000;
    let mut estimates = Vec::new();
    pf.run_with(n, obs.horizon(), 1, 0, |e| {
        estimates.push(particle_moments(e, |x| x).expect("finite test function"));
    })?;
    println!("N = {n}");
    println!(
        "{:>3} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "t", "x_t", "y_t", "exact", "particle", "z"
    );
    for (t, (m, _)) in estimates.iter().enumerate().skip(1) {
        let exact = ctx.mean(t, &identity);
        let sd = (ctx.variance(t, &identity)? / n as f64).sqrt();
        println!(
            "{t:>3} {:>9.4} {:>9.4} {exact:>9.4} {m:>9.4} {:>9.2}",
            states[t],
            obs.get(t),
            (m - exact) / sd
        );
    }
    Ok(())
}
