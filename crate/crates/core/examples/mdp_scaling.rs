//! Moderate deviation scaling on the reference model: the threshold is calibrated
//! so that the largest N still sees about 50 hits, then -log p / b_N^2 is compared
//! with the rate delta^2 / 2V across N.

use smc_mdp::experiments::{
    calibrate_delta, mdp_scaling_curve, speed, DeviationSet, Harness, Setup, TestFunction,
};
use smc_mdp::model::{FiniteHmm, ObservationSequence};

fn main() -> smc_mdp::error::Result<()> {
    let model = FiniteHmm::coin2();
    let obs = ObservationSequence::new(vec![1.0])?;
    let setup = Setup::new(&model, &obs, TestFunction::parse("indicator1")?)?;
    let (alpha, r) = (0.25, 20_000);
    let schedule = [100, 300, 1_000, 3_000];
    let delta = calibrate_delta(setup.variance(1), speed(3_000, alpha), 50.0 / r as f64)?;
    let curve = mdp_scaling_curve(
        &setup,
        &schedule,
        alpha,
        DeviationSet::TwoSided { delta },
        r,
        &Harness::new(0, None),
    )?;
    println!(
        "delta = {delta:.4}, rate = {:.5}",
        curve[0].theoretical_rate
    );
    println!(
        "{:>6} {:>7} {:>7} {:>10} {:>22}",
        "N", "b_N", "hits", "-log p/b^2", "95% interval for p"
    );
    for e in curve {
        println!(
            "{:>6} {:>7.3} {:>7} {:>10.5}   [{:.2e}, {:.2e}]",
            e.n, e.b_n, e.hits, e.normalized_rate, e.ci_low, e.ci_high
        );
    }
    Ok(())
}
