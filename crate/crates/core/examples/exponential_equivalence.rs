//! The bias term R_N and its linearized substitute R~_N: their gap shrinks with N.

use smc_mdp::experiments::{equivalence_diagnostic, Harness, Setup, TestFunction};
use smc_mdp::model::{FiniteHmm, ObservationSequence};

fn main() -> smc_mdp::error::Result<()> {
    let model = FiniteHmm::coin2();
    let obs = ObservationSequence::new(vec![1.0, 0.0])?;
    let setup = Setup::new(&model, &obs, TestFunction::parse("indicator1")?)?;
    let rows = equivalence_diagnostic(
        &setup,
        &[100, 1_000, 10_000],
        0.25,
        500,
        &Harness::new(0, None),
    )?;
    println!(
        "{:>6} {:>12} {:>12} {:>12} {:>14}",
        "N", "med |R-R~|", "q90 |R-R~|", "med |R~|", "mean K_N"
    );
    for r in rows {
        println!(
            "{:>6} {:>12.3e} {:>12.3e} {:>12.3e} {:>+14.3e}",
            r.n, r.abs_diff_median, r.abs_diff_q90, r.abs_r_tilde_median, r.k_mean
        );
    }
    Ok(())
}
