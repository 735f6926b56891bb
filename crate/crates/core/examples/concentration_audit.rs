//! Tail frequencies of the particle estimate against the exponential bound
//! alpha(t) exp(-N eps^2 / (beta(t) |psi|^2)).

use smc_mdp::experiments::{concentration_audit, Harness, Setup, TestFunction};
use smc_mdp::model::{FiniteHmm, ObservationSequence};

fn main() -> smc_mdp::error::Result<()> {
    let model = FiniteHmm::coin2();
    let obs = ObservationSequence::new(vec![1.0, 0.0])?;
    let setup = Setup::new(&model, &obs, TestFunction::parse("indicator1")?)?;
    let rows = concentration_audit(
        &setup,
        &[100, 1000],
        &[0.05, 0.1, 0.2],
        None,
        20_000,
        &Harness::new(0, None),
    )?;
    println!(
        "{:>2} {:>5} {:>5} {:>9} {:>9} {:>9} {:>9}",
        "t", "N", "eps", "tail", "ci_high", "bound", "violated"
    );
    for r in rows {
        println!(
            "{:>2} {:>5} {:>5} {:>9.2e} {:>9.2e} {:>9.2e} {:>9}",
            r.t, r.n, r.epsilon, r.empirical, r.ci_high, r.bound, r.violated
        );
    }
    Ok(())
}
