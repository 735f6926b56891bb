//! Truncating an unbounded test function: V_T(psi 1{|psi| < c}) approaches V_T(psi)
//! for psi(x) = x^2 on the linear-Gaussian model.

use smc_mdp::experiments::{run_experiments, ExperimentConfig, Harness};

fn main() -> smc_mdp::error::Result<()> {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/configs/linear_gaussian.toml"
    );
    let overrides = [
        r#"experiments=["truncation"]"#.to_string(),
        "truncation.c_schedule=[1.0, 2.0, 4.0, 8.0, 16.0]".to_string(),
    ];
    let config = ExperimentConfig::from_file(path, &overrides)?;
    let (report, _) = run_experiments(&config, &Harness::new(config.seed, None))?;
    let study = report.truncation.expect("truncation was requested");
    if let Some(m) = &study.membership {
        println!(
            "class check: {:?} (witness beta {:?})",
            m.verdict, m.witness_beta
        );
    }
    println!(
        "{:>5} {:>12} {:>12} {:>12}",
        "c", "V(psi^c)", "rel. diff", "tail moment"
    );
    for r in &study.rows {
        println!(
            "{:>5} {:>12.6} {:>12.3e} {:>12.3e}",
            r.c, r.v_truncated, r.relative_difference, r.remainder_second_moment
        );
    }
    println!("V(psi) = {:.6}", study.rows[0].v_full);
    Ok(())
}
