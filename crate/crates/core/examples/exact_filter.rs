//! Exact filtering on the two-state reference model, cross-checked against
//! path enumeration, and the grid filter against the Kalman recursion.

use smc_mdp::exact::{brute_force_filter, kalman_filter, run_exact_filter, LinearGaussian};
use smc_mdp::model::{FiniteHmm, GaussianPrior, ObservationSequence};

fn main() -> smc_mdp::error::Result<()> {
    let model = FiniteHmm::coin2();
    let obs = ObservationSequence::new(vec![1.0, 0.0, 0.0, 1.0])?;
    let run = run_exact_filter(&model, &obs)?;
    println!("coin2, y = {:?}", obs.values());
    println!(
        "{:>3} {:>10} {:>10} {:>10}",
        "t", "kappa_t", "P(x=0)", "P(x=1)"
    );
    for t in 1..=obs.horizon() {
        let f = run.filter(t).values().unwrap();
        println!(
            "{t:>3} {:>10.6} {:>10.6} {:>10.6}",
            run.kappa(t),
            f[0],
            f[1]
        );
    }
    let brute = brute_force_filter(&model, &obs)?;
    let gap = run
        .filter(4)
        .values()
        .unwrap()
        .iter()
        .zip(brute.values().unwrap())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!(
        "marginal likelihood {:.8}; forward vs enumeration {gap:.1e}",
        run.marginal_likelihood()
    );

    let params = LinearGaussian {
        initial: GaussianPrior::standard(),
        coefficient: 0.5,
        state_noise: 0.5,
        observation_coefficient: 1.0,
        observation_noise: 0.5,
    };
    let y = ObservationSequence::new(vec![0.4, -1.2, 0.3])?;
    let grid = run_exact_filter(&params.to_model()?, &y)?;
    println!("\nlinear-Gaussian: Kalman vs quadrature grid");
    for (t, (m, v)) in kalman_filter(&params, &y)?.into_iter().enumerate() {
        let (gm, gv) = grid.filter(t + 1).moments();
        println!(
            "t = {}: mean {m:+.8} / {gm:+.8}, variance {v:.8} / {gv:.8}",
            t + 1
        );
    }
    Ok(())
}
