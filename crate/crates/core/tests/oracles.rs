//! Exact filters against independent references: path enumeration, the Kalman
//! recursion and a direct matrix computation written here.

use rand::Rng;
use smc_mdp::exact::{
    brute_force_filter, brute_force_posterior, kalman_filter, run_exact_filter, LinearGaussian,
};
use smc_mdp::model::{ContinuousModel, FiniteHmm, GaussianPrior, GridSpec, ObservationSequence};
use smc_mdp::stream::{seeded, Stream};

fn row(k: usize, rng: &mut Stream) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| 0.02 + rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn random_case(rng: &mut Stream) -> (FiniteHmm, ObservationSequence) {
    let states = rng.random_range(2..=4);
    let symbols = rng.random_range(2..=3);
    let horizon = rng.random_range(1..=6);
    let model = FiniteHmm::new(
        row(states, rng),
        (0..states).map(|_| row(states, rng)).collect(),
        (0..states).map(|_| row(symbols, rng)).collect(),
    )
    .unwrap();
    let obs = ObservationSequence::new(
        (0..horizon)
            .map(|_| rng.random_range(0..symbols) as f64)
            .collect(),
    )
    .unwrap();
    (model, obs)
}

/// `α_t = (α_{t-1} A) ∘ B[:, y_t]`, normalised, written against the raw matrices.
fn forward_reference(model: &FiniteHmm, obs: &ObservationSequence) -> (Vec<f64>, f64) {
    let k = model.states();
    let mut alpha = model.initial().to_vec();
    let mut likelihood = 1.0;
    for (t, &y) in obs.values().iter().enumerate() {
        let a = model.transition(t + 1);
        let mut next = vec![0.0; k];
        for (i, &p) in alpha.iter().enumerate() {
            for j in 0..k {
                next[j] += p * a[i][j];
            }
        }
        for (j, v) in next.iter_mut().enumerate() {
            *v *= model.emission()[j][y as usize];
        }
        let z: f64 = next.iter().sum();
        likelihood *= z;
        alpha = next.into_iter().map(|v| v / z).collect();
    }
    (alpha, likelihood)
}

#[test]
fn forward_recursion_matches_enumeration_and_direct_products() {
    let mut rng = seeded(101);
    for _ in 0..20 {
        let (model, obs) = random_case(&mut rng);
        let run = run_exact_filter(&model, &obs).unwrap();
        let exact = run.filter(obs.horizon()).values().unwrap().to_vec();
        let brute = brute_force_filter(&model, &obs).unwrap();
        let (direct, likelihood) = forward_reference(&model, &obs);
        for ((e, b), d) in exact.iter().zip(brute.values().unwrap()).zip(&direct) {
            assert!((e - b).abs() <= 1e-12, "{e} vs {b}");
            assert!((e - d).abs() <= 1e-12, "{e} vs {d}");
        }
        let (_, total) = brute_force_posterior(&model, &obs).unwrap();
        assert!((run.marginal_likelihood() - likelihood).abs() <= 1e-12 * likelihood);
        assert!((total - likelihood).abs() <= 1e-12 * likelihood);
    }
}

#[test]
fn three_state_horizon_six() {
    let model = FiniteHmm::new(
        vec![0.2, 0.5, 0.3],
        vec![
            vec![0.7, 0.2, 0.1],
            vec![0.1, 0.8, 0.1],
            vec![0.25, 0.25, 0.5],
        ],
        vec![vec![0.9, 0.1], vec![0.4, 0.6], vec![0.05, 0.95]],
    )
    .unwrap();
    let obs = ObservationSequence::new(vec![0.0, 1.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
    let run = run_exact_filter(&model, &obs).unwrap();
    let brute = brute_force_filter(&model, &obs).unwrap();
    for t in 1..=6 {
        let (direct, _) = forward_reference(&model, &obs.prefix(t));
        for (a, b) in run.filter(t).values().unwrap().iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
    for (a, b) in run
        .filter(6)
        .values()
        .unwrap()
        .iter()
        .zip(brute.values().unwrap())
    {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn normalizers_multiply_to_the_marginal_likelihood() {
    let mut rng = seeded(7);
    let (model, obs) = random_case(&mut rng);
    let run = run_exact_filter(&model, &obs).unwrap();
    let (_, marginal) = forward_reference(&model, &obs);
    let product: f64 = (1..=obs.horizon()).map(|t| run.kappa(t)).product();
    assert!((product - marginal).abs() <= 1e-14);
}

fn kalman_case(coefficient: f64, q: f64, r: f64, prior: GaussianPrior) -> LinearGaussian {
    LinearGaussian {
        initial: prior,
        coefficient,
        state_noise: q,
        observation_coefficient: 1.0,
        observation_noise: r,
    }
}

#[test]
fn kalman_matches_the_quadrature_filter() {
    let cases = [
        (
            kalman_case(0.5, 0.5, 0.5, GaussianPrior::standard()),
            vec![0.4, -1.2, 0.3, 2.0],
        ),
        (
            kalman_case(
                0.95,
                0.2,
                1.0,
                GaussianPrior {
                    mean: 1.0,
                    variance: 0.5,
                },
            ),
            vec![1.5, 0.7, -0.2],
        ),
        (
            kalman_case(-0.7, 1.0, 0.25, GaussianPrior::standard()),
            vec![-2.0, 2.0, -1.0, 0.0, 1.0],
        ),
    ];
    for (params, y) in cases {
        let obs = ObservationSequence::new(y).unwrap();
        let kalman = kalman_filter(&params, &obs).unwrap();
        let model: ContinuousModel = params.to_model_on(GridSpec::default()).unwrap();
        let run = run_exact_filter(&model, &obs).unwrap();
        for (t, (m, v)) in kalman.iter().enumerate() {
            let (gm, gv) = run.filter(t + 1).moments();
            assert!((gm - m).abs() <= 1e-8, "t = {}: mean {gm} vs {m}", t + 1);
            assert!(
                (gv - v).abs() <= 1e-8,
                "t = {}: variance {gv} vs {v}",
                t + 1
            );
        }
    }
}

#[test]
fn grid_error_comes_from_the_domain_not_the_spacing() {
    let params = kalman_case(0.5, 0.5, 0.5, GaussianPrior::standard());
    let obs = ObservationSequence::new(vec![1.0, -0.5]).unwrap();
    let (m, _) = kalman_filter(&params, &obs).unwrap()[1];
    let err = |half: f64, nodes| {
        let model = params
            .to_model_on(GridSpec {
                lower: -half,
                upper: half,
                nodes,
            })
            .unwrap();
        (run_exact_filter(&model, &obs)
            .unwrap()
            .filter(2)
            .moments()
            .0
            - m)
            .abs()
    };
    // the trapezoid rule is spectrally accurate on smooth, decaying integrands
    assert!(err(8.0, 97) <= 1e-10);
    assert!(err(8.0, 401) <= 1e-10);
    assert!(err(1.5, 401) > 1e-3);
}

/// `∫ exp(−x²/2 + M x) dx = √(2π) e^{M²/2}` and `∫ exp(−x²/2 + M|x|) dx = 2√(2π) e^{M²/2} Φ(M)`.
#[test]
fn quadrature_against_closed_forms() {
    use smc_mdp::quadrature::{quadrature_integrate, Scheme};
    use statrs::distribution::{ContinuousCDF, Normal};
    let phi = Normal::standard();
    let root = (2.0 * std::f64::consts::PI).sqrt();
    for m in [0.0f64, 0.5, 1.0, 2.5] {
        let smooth = root * (0.5 * m * m).exp();
        let kinked = 2.0 * smooth * phi.cdf(m);
        let gh = quadrature_integrate(
            |x| (-0.5 * x * x + m * x).exp(),
            Scheme::standard_gauss_hermite(),
            40,
        )
        .unwrap();
        assert!(
            (gh / smooth - 1.0).abs() < 1e-12,
            "M = {m}: {gh} vs {smooth}"
        );
        let grid = Scheme::Grid { half_width: 40.0 };
        let trap =
            quadrature_integrate(|x| (-0.5 * x * x + m * x.abs()).exp(), grid, 8001).unwrap();
        assert!(
            (trap / kinked - 1.0).abs() < 1e-5,
            "M = {m}: {trap} vs {kinked}"
        );
    }
}
