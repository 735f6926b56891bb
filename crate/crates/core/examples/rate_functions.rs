//! Rate functions: the Gaussian rate in finite dimension, the path rate J, its
//! contraction to the endpoint, and the minimum over a sup-norm tube.

use nalgebra::DMatrix;
use smc_mdp::theory::{
    contraction_minimum, rate_I, rate_J, rate_J_finite, tube_minimum, PathFunction,
};

fn main() -> smc_mdp::error::Result<()> {
    let v = DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.1, 0.3]);
    println!("I([0.2, -0.1]) = {:.6}", rate_I(&v, &[0.2, -0.1])?);
    let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    println!(
        "singular V: I([1, 1]) = {:.3}, I([1, 0]) = {}",
        rate_I(&singular, &[1.0, 1.0])?,
        rate_I(&singular, &[1.0, 0.0])?
    );

    // the reference model at T = 1 with psi = 1{x = 1}
    let (sigma_sq, vt) = (0.191834, 0.265427);
    for f in [PathFunction::linear(0.3), PathFunction::ramp(0.3, 0.5)?] {
        let coarse = rate_J_finite(sigma_sq, vt, &[1.0], &[0.3])?;
        println!(
            "J(f) = {:.6} for breakpoints {:?}; endpoint-only value {coarse:.6}",
            rate_J(sigma_sq, vt, &f),
            f.breakpoints()
        );
    }
    let best = contraction_minimum(sigma_sq, vt, 0.3, 64)?;
    println!(
        "min J over f(1) = 0.3: {:.10} vs x^2 / 2V = {:.10}",
        best.value,
        0.09 / (2.0 * vt)
    );
    println!(
        "the minimizer is linear: f(1/64) = {:.6} = x / 64",
        best.nodes[1]
    );
    for eta in [0.05, 0.1, 0.2] {
        let tube = tube_minimum(sigma_sq, vt, &PathFunction::ramp(0.3, 0.5)?, eta, 64)?;
        println!("tube around the ramp, eta = {eta}: {:.6}", tube.value);
    }
    Ok(())
}
