//! Functional deviations: probability that the rescaled partial-sum path stays in
//! a sup-norm tube around a target, against the tube minimum of J_T.

use smc_mdp::experiments::{
    functional_path_experiment, target_path, DeviationSet, Harness, PathShape, Setup, TestFunction,
};
use smc_mdp::model::{FiniteHmm, ObservationSequence};

fn main() -> smc_mdp::error::Result<()> {
    let model = FiniteHmm::coin2();
    let obs = ObservationSequence::new(vec![1.0])?;
    let setup = Setup::new(&model, &obs, TestFunction::parse("indicator1")?)?;
    let endpoint = 0.25;
    let targets: Vec<_> = [PathShape::Zero, PathShape::Linear, PathShape::Ramp]
        .into_iter()
        .map(|s| Ok((s, target_path(s, endpoint, 0.5)?)))
        .collect::<smc_mdp::error::Result<_>>()?;
    let h = Harness::new(0, None);
    let set = DeviationSet::TwoSided { delta: endpoint };
    for n in [200, 1000] {
        let exp =
            functional_path_experiment(&setup, n, 0.25, &targets, 0.2, 64, Some(set), 5_000, &h)?;
        println!("N = {n}");
        for e in &exp.estimates {
            println!(
                "  {:<7} p = {:.4} [{:.4}, {:.4}]  -log p/b^2 = {:.4}  rate = {:.4}",
                format!("{:?}", e.shape),
                e.p_hat,
                e.ci_low,
                e.ci_high,
                e.normalized_rate,
                e.theoretical_rate
            );
        }
        if let Some(d) = exp.endpoint {
            println!(
                "  endpoint |M| > {endpoint}: p = {:.4}, rate = {:.4}",
                d.p_hat, d.theoretical_rate
            );
        }
    }
    Ok(())
}
