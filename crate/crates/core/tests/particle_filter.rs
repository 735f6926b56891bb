//! Statistical checks of the particle filter against the exact filter. Every test
//! uses fixed seeds, so the thresholds are deterministic; they are set at about
//! four standard errors.

use smc_mdp::exact::run_exact_filter;
use smc_mdp::model::{FiniteHmm, ModelSpec, ObservationSequence, StateSpaceModel, StepKernel};
use smc_mdp::particle::{filter_step_with, particle_moments, ParticleEnsemble, ParticleFilter};
use smc_mdp::stream::seeded;
use smc_mdp::theory::TheoryContext;

fn chi_square(counts: &[f64], probs: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum();
    counts
        .iter()
        .zip(probs)
        .map(|(c, p)| (c - n * p).powi(2) / (n * p))
        .sum()
}

fn three_state() -> FiniteHmm {
    FiniteHmm::new(
        vec![0.2, 0.5, 0.3],
        vec![
            vec![0.7, 0.2, 0.1],
            vec![0.1, 0.8, 0.1],
            vec![0.25, 0.25, 0.5],
        ],
        vec![vec![0.9, 0.1], vec![0.4, 0.6], vec![0.05, 0.95]],
    )
    .unwrap()
}

#[test]
fn mutation_follows_the_tilted_kernel() {
    let model = three_state();
    let y = 1.0;
    let kernel = model.step_kernel(1, y).unwrap();
    let n = 60_000;
    for start in 0..3 {
        let e = ParticleEnsemble::from_particles(vec![start; n], 0).unwrap();
        let next =
            filter_step_with(&kernel, &e, &mut seeded(1), &mut seeded(2 + start as u64)).unwrap();
        let mut counts = [0.0; 3];
        for &x in next.particles() {
            counts[x] += 1.0;
        }
        // â(x, j) ∝ a(x, j) g(j, y)
        let a = &model.transition(1)[start];
        let raw: Vec<f64> = (0..3).map(|j| a[j] * model.emission()[j][1]).collect();
        let z: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|r| r / z).collect();
        // two degrees of freedom; 18.4 is the 1e-4 upper quantile
        assert!(
            chi_square(&counts, &probs) < 18.4,
            "start {start}: {counts:?} vs {probs:?}"
        );
        assert!((kernel.log_selection_weight(start) - z.ln()).abs() < 1e-14);
    }
}

#[test]
fn selection_follows_the_emission_weights() {
    let model = three_state();
    let kernel = model.step_kernel(1, 0.0).unwrap();
    let parents: Vec<usize> = (0..60_000).map(|i| i % 3).collect();
    let e = ParticleEnsemble::from_particles(parents.clone(), 0).unwrap();
    let next = filter_step_with(&kernel, &e, &mut seeded(11), &mut seeded(12)).unwrap();
    let mut counts = [0.0; 3];
    for &a in next.ancestors() {
        counts[parents[a]] += 1.0;
    }
    let b: Vec<f64> = (0..3)
        .map(|x| {
            (0..3)
                .map(|j| model.transition(1)[x][j] * model.emission()[j][0])
                .sum()
        })
        .collect();
    let z: f64 = b.iter().sum();
    let probs: Vec<f64> = b.iter().map(|v| v / z).collect();
    assert!(
        chi_square(&counts, &probs) < 18.4,
        "{counts:?} vs {probs:?}"
    );
}

#[test]
fn replicated_means_centre_on_the_exact_filter() {
    let model = FiniteHmm::coin2();
    let obs = ObservationSequence::new(vec![1.0, 0.0, 1.0]).unwrap();
    let ctx = TheoryContext::new(&model, &obs).unwrap();
    let psi = [0.0, 1.0];
    let (m, v) = (ctx.mean(3, &psi), ctx.variance(3, &psi).unwrap());
    let pf = ParticleFilter::new(&model, &obs).unwrap();
    let (n, reps) = (2_000usize, 500u64);
    let errors: Vec<f64> = (0..reps)
        .map(|r| {
            particle_moments(&pf.run_with(n, 3, 40, r, |_| {}).unwrap(), |x| x as f64)
                .unwrap()
                .0
                - m
        })
        .collect();
    let mean_err = errors.iter().sum::<f64>() / reps as f64;
    assert!(
        mean_err.abs() <= 4.0 * (v / (n as f64 * reps as f64)).sqrt(),
        "{mean_err}"
    );
    let scaled_var = errors.iter().map(|e| e * e).sum::<f64>() / reps as f64 * n as f64;
    // for R = 500 the relative standard error of a variance is about 6%
    assert!(
        (scaled_var / v - 1.0).abs() < 0.25,
        "N var = {scaled_var}, V = {v}"
    );
}

#[test]
fn particle_variance_tracks_the_filter_variance() {
    let model = FiniteHmm::coin2();
    let obs = ObservationSequence::new(vec![1.0, 1.0]).unwrap();
    let ctx = TheoryContext::new(&model, &obs).unwrap();
    let sigma_sq = ctx.sigma_sq(2, &[0.0, 1.0]);
    let e = ParticleFilter::new(&model, &obs)
        .unwrap()
        .run_with(40_000, 2, 5, 0, |_| {})
        .unwrap();
    let (_, s) = particle_moments(&e, |x| x as f64).unwrap();
    assert!((s / sigma_sq - 1.0).abs() < 0.05, "{s} vs {sigma_sq}");
}

/// `Π_t N^{-1} Σ_i b̂_t(x_{i,t-1})` estimates the marginal likelihood without bias.
fn likelihood_estimate<M: StateSpaceModel>(
    pf: &ParticleFilter<'_, M>,
    n: usize,
    t: usize,
    r: u64,
) -> f64 {
    let mut product = 1.0;
    pf.run_with(n, t, 90, r, |e| {
        let w = e.log_selection_weights();
        if !w.is_empty() {
            product *= w.iter().map(|l| l.exp()).sum::<f64>() / w.len() as f64;
        }
    })
    .unwrap();
    product
}

#[test]
fn likelihood_estimate_is_unbiased() {
    let model = three_state();
    let obs = ObservationSequence::new(vec![1.0, 0.0, 1.0, 1.0]).unwrap();
    let exact = run_exact_filter(&model, &obs)
        .unwrap()
        .marginal_likelihood();
    let pf = ParticleFilter::new(&model, &obs).unwrap();
    // small N makes the estimator noisy; unbiasedness holds for every N
    let est: Vec<f64> = (0..4_000)
        .map(|r| likelihood_estimate(&pf, 5, 4, r))
        .collect();
    let mean = est.iter().sum::<f64>() / est.len() as f64;
    let sd = (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt();
    assert!(
        (mean - exact).abs() <= 4.0 * sd / (est.len() as f64).sqrt(),
        "{mean} vs {exact}"
    );
}

#[test]
fn continuous_filter_matches_the_grid_filter() {
    let model = ModelSpec::builtin("linear_gaussian").unwrap();
    let ModelSpec::Continuous(model) = model else {
        panic!("linear_gaussian is continuous")
    };
    let obs = ObservationSequence::new(vec![0.8, -0.3]).unwrap();
    let ctx = TheoryContext::new(&model, &obs).unwrap();
    let psi = ctx.eval(|x| x);
    let (m, v) = (ctx.mean(2, &psi), ctx.variance(2, &psi).unwrap());
    let pf = ParticleFilter::new(&model, &obs).unwrap();
    let (n, reps) = (2_000usize, 200u64);
    let mean_err = (0..reps)
        .map(|r| {
            particle_moments(&pf.run_with(n, 2, 3, r, |_| {}).unwrap(), |x| x)
                .unwrap()
                .0
                - m
        })
        .sum::<f64>()
        / reps as f64;
    assert!(
        mean_err.abs() <= 4.0 * (v / (n as f64 * reps as f64)).sqrt(),
        "{mean_err}"
    );
}

#[test]
fn root_mean_square_error_decays_at_the_square_root_rate() {
    let model = FiniteHmm::coin2();
    let obs = ObservationSequence::new(vec![1.0, 0.0]).unwrap();
    let m = run_exact_filter(&model, &obs)
        .unwrap()
        .filter(2)
        .values()
        .unwrap()[1];
    let pf = ParticleFilter::new(&model, &obs).unwrap();
    let ns = [100usize, 400, 1_600, 6_400];
    let points: Vec<(f64, f64)> = ns
        .iter()
        .map(|&n| {
            let mse = (0..300)
                .map(|r| {
                    (particle_moments(&pf.run_with(n, 2, 8, r, |_| {}).unwrap(), |x| x as f64)
                        .unwrap()
                        .0
                        - m)
                        .powi(2)
                })
                .sum::<f64>()
                / 300.0;
            ((n as f64).ln(), 0.5 * mse.ln())
        })
        .collect();
    let k = points.len() as f64;
    let (mx, my) = (
        points.iter().map(|p| p.0).sum::<f64>() / k,
        points.iter().map(|p| p.1).sum::<f64>() / k,
    );
    let slope = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / points.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() <= 0.1, "slope {slope}");
}
