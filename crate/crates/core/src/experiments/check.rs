use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::exact::{brute_force_filter, kalman_filter, run_exact_filter, LinearGaussian};
use crate::model::{FiniteHmm, GaussianPrior, ObservationSequence};
use crate::particle::{particle_moments, ParticleFilter};
use crate::stream::{seeded, Stream};
use crate::theory::TheoryContext;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, worst: f64, tol: f64) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: worst <= tol,
        detail: format!("worst deviation {worst:.3e} (tolerance {tol:.0e})"),
    }
}

fn stochastic_row(k: usize, rng: &mut Stream) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| 0.05 + rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn random_hmm(states: usize, symbols: usize, rng: &mut Stream) -> Result<FiniteHmm> {
    let initial = stochastic_row(states, rng);
    let transition = (0..states).map(|_| stochastic_row(states, rng)).collect();
    let emission = (0..states).map(|_| stochastic_row(symbols, rng)).collect();
    FiniteHmm::new(initial, transition, emission)
}

fn split_identity() -> Result<CheckOutcome> {
    let mut rng = seeded(32);
    let obs = ObservationSequence::new(vec![1.0, 0.0, 0.0, 1.0])?;
    let model = FiniteHmm::coin2();
    let mut worst = 0.0f64;
    for t in 1..=4 {
        let ctx = TheoryContext::new(&model, &obs.prefix(t))?;
        let psis: Vec<Vec<f64>> = (0..=t)
            .map(|_| (0..2).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        for _ in 0..10 {
            let lambda: Vec<f64> = (0..=t).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (lhs, rhs) = ctx.covariance_split_check(&psis, &lambda)?;
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(outcome("split identity of V_T", worst, 1e-10))
}

fn polarization() -> Result<CheckOutcome> {
    let mut rng = seeded(33);
    let model = random_hmm(3, 2, &mut rng)?;
    let obs = ObservationSequence::new(vec![0.0, 1.0, 1.0])?;
    let ctx = TheoryContext::new(&model, &obs)?;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let a: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let plus: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let minus: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let polar = 0.25 * (ctx.variance(3, &plus)? - ctx.variance(3, &minus)?);
        worst = worst.max((ctx.covariance(3, 3, &a, &b)? - polar).abs());
        // off-diagonal entries are symmetric in their arguments
        worst = worst.max((ctx.covariance(1, 3, &a, &b)? - ctx.covariance(3, 1, &b, &a)?).abs());
    }
    Ok(outcome("polarization of V_{r,t}", worst, 1e-12))
}

fn exact_vs_brute_force() -> Result<CheckOutcome> {
    let mut rng = seeded(34);
    let mut worst = 0.0f64;
    for states in 2..=4 {
        let model = random_hmm(states, 3, &mut rng)?;
        let obs =
            ObservationSequence::new((0..5).map(|_| rng.random_range(0..3) as f64).collect())?;
        let exact = run_exact_filter(&model, &obs)?;
        let brute = brute_force_filter(&model, &obs)?;
        let (a, b) = (
            exact.filter(5).values().unwrap_or(&[]),
            brute.values().unwrap_or(&[]),
        );
        worst = worst.max(
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        );
    }
    Ok(outcome(
        "forward recursion vs path enumeration",
        worst,
        1e-12,
    ))
}

fn kalman_vs_grid() -> Result<CheckOutcome> {
    let params = LinearGaussian {
        initial: GaussianPrior::standard(),
        coefficient: 0.8,
        state_noise: 0.5,
        observation_coefficient: 1.0,
        observation_noise: 0.4,
    };
    let obs = ObservationSequence::new(vec![0.3, -0.7, 1.1])?;
    let kalman = kalman_filter(&params, &obs)?;
    let run = run_exact_filter(&params.to_model()?, &obs)?;
    let mut worst = 0.0f64;
    for (t, &(m, v)) in kalman.iter().enumerate() {
        let (gm, gv) = run.filter(t + 1).moments();
        worst = worst.max((gm - m).abs()).max((gv - v).abs());
    }
    Ok(outcome("Kalman filter vs quadrature filter", worst, 1e-6))
}

fn particle_vs_exact() -> Result<CheckOutcome> {
    let model = FiniteHmm::coin2();
    let obs = ObservationSequence::new(vec![1.0, 0.0])?;
    let exact = run_exact_filter(&model, &obs)?;
    let pf = ParticleFilter::new(&model, &obs)?;
    let n = 20_000;
    let e = pf.run_with(n, 2, 35, 0, |_| {})?;
    let (m, _) = particle_moments(&e, |x| x as f64)?;
    let p = exact.filter(2).values().map_or(0.0, |v| v[1]);
    // a generous multiple of the CLT scale; the filter variance exceeds the binomial one
    let z = (m - p).abs() / (p * (1.0 - p) / n as f64).sqrt();
    Ok(CheckOutcome {
        name: "particle filter vs exact filter",
        passed: z <= 8.0,
        detail: format!("standardized deviation {z:.2}"),
    })
}

/// Fast deterministic invariant suite: split identity, polarization and the
/// exact / brute-force / Kalman / particle oracle triangle.
pub fn invariant_check() -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        split_identity()?,
        polarization()?,
        exact_vs_brute_force()?,
        kalman_vs_grid()?,
        particle_vs_exact()?,
    ])
}
