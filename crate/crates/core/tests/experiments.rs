use std::path::PathBuf;

use smc_mdp::error::Error;
use smc_mdp::experiments::{
    calibrate_delta, clt_variance_check, concentration_audit, equivalence_diagnostic,
    functional_path_experiment, mdp_scaling_curve, run_experiments, speed, target_path,
    DeviationSet, ExperimentConfig, Harness, PathShape, Setup, TestFunction,
};
use smc_mdp::model::{FiniteHmm, ObservationSequence};

fn coin2() -> (FiniteHmm, ObservationSequence) {
    (
        FiniteHmm::coin2(),
        ObservationSequence::new(vec![1.0]).unwrap(),
    )
}

fn configs() -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs");
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    files
}

#[test]
fn example_configs_parse_and_echo() {
    let files = configs();
    assert!(files.len() >= 3);
    for path in files {
        let config = ExperimentConfig::from_file(&path, &[])
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = ExperimentConfig::parse(&config.echo().unwrap(), &[]).unwrap();
        assert_eq!(config, again, "{}", path.display());
    }
}

#[test]
fn results_do_not_depend_on_the_worker_count() {
    let (model, obs) = coin2();
    let setup = Setup::new(&model, &obs, TestFunction::parse("indicator1").unwrap()).unwrap();
    let set = DeviationSet::TwoSided { delta: 0.1 };
    let one = Harness::new(4, Some(1));
    let three = Harness::new(4, Some(3));
    assert_eq!(
        setup.fluctuations(1, 300, 2.0, 200, &one).unwrap(),
        setup.fluctuations(1, 300, 2.0, 200, &three).unwrap()
    );
    assert_eq!(
        mdp_scaling_curve(&setup, &[100, 400], 0.25, set, 300, &one).unwrap(),
        mdp_scaling_curve(&setup, &[100, 400], 0.25, set, 300, &three).unwrap()
    );
    assert_eq!(
        equivalence_diagnostic(&setup, &[100], 0.25, 100, &one).unwrap(),
        equivalence_diagnostic(&setup, &[100], 0.25, 100, &three).unwrap()
    );
    let other_seed = Harness::new(5, Some(1));
    assert_ne!(
        setup.fluctuations(1, 300, 2.0, 50, &one).unwrap(),
        setup.fluctuations(1, 300, 2.0, 50, &other_seed).unwrap()
    );
}

#[test]
fn unreachable_threshold_trips_the_guard() {
    let (model, obs) = coin2();
    let setup = Setup::new(&model, &obs, TestFunction::parse("indicator1").unwrap()).unwrap();
    let h = Harness::new(0, Some(1));
    let err = mdp_scaling_curve(
        &setup,
        &[100, 1000],
        0.25,
        DeviationSet::TwoSided { delta: 2.0 },
        200,
        &h,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Estimability(_)), "{err}");
    let f = target_path(PathShape::Linear, 5.0, 0.5).unwrap();
    let err = functional_path_experiment(
        &setup,
        100,
        0.25,
        &[(PathShape::Linear, f)],
        0.1,
        16,
        None,
        100,
        &h,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Estimability(_)), "{err}");
}

#[test]
fn constant_test_function_never_deviates() {
    let (model, obs) = coin2();
    let setup = Setup::new(&model, &obs, TestFunction::parse("constant").unwrap()).unwrap();
    let h = Harness::new(0, Some(1));
    let clt = clt_variance_check(&setup, 1, 200, 100, &h).unwrap();
    assert_eq!(clt.v, 0.0);
    assert_eq!(clt.ratio, 1.0);
    // V = 0 makes the rate infinite, so zero hits are the expected outcome, not a guard failure
    let curve = mdp_scaling_curve(
        &setup,
        &[100],
        0.25,
        DeviationSet::TwoSided { delta: 0.01 },
        100,
        &h,
    )
    .unwrap();
    assert_eq!(curve[0].hits, 0);
    assert_eq!(curve[0].theoretical_rate, f64::INFINITY);
    assert!(calibrate_delta(0.0, 1.0, 0.05).is_err());
}

#[test]
fn zero_threshold_is_hit_almost_surely() {
    let (model, obs) = coin2();
    let setup = Setup::new(&model, &obs, TestFunction::parse("indicator1").unwrap()).unwrap();
    let h = Harness::new(0, Some(1));
    let curve = mdp_scaling_curve(
        &setup,
        &[100],
        0.25,
        DeviationSet::TwoSided { delta: 0.0 },
        200,
        &h,
    )
    .unwrap();
    // the exact mean is irrational, so an empirical frequency never equals it
    assert_eq!(curve[0].p_hat, 1.0);
    assert_eq!(curve[0].theoretical_rate, 0.0);
    assert_eq!(curve[0].normalized_rate, 0.0);
}

#[test]
fn path_endpoint_reproduces_the_deviation_estimate() {
    let (model, obs) = coin2();
    let setup = Setup::new(&model, &obs, TestFunction::parse("indicator1").unwrap()).unwrap();
    let h = Harness::new(9, None);
    let n = 500;
    let set = DeviationSet::TwoSided { delta: 0.12 };
    let targets = [
        (
            PathShape::Linear,
            target_path(PathShape::Linear, 0.12, 0.5).unwrap(),
        ),
        (
            PathShape::Zero,
            target_path(PathShape::Zero, 0.12, 0.5).unwrap(),
        ),
    ];
    let exp =
        functional_path_experiment(&setup, n, 0.25, &targets, 0.1, 32, Some(set), 400, &h).unwrap();
    let mdp = mdp_scaling_curve(&setup, &[n], 0.25, set, 400, &h).unwrap();
    assert_eq!(exp.endpoint.unwrap(), mdp[0]);
    // the zero path is the cheapest target in the sup-norm tube
    let zero = &exp.estimates[1];
    assert_eq!(zero.theoretical_rate, 0.0);
    assert!(zero.p_hat >= exp.estimates[0].p_hat);
}

#[test]
fn clt_at_time_zero_uses_the_prior() {
    let (model, _) = coin2();
    let obs = ObservationSequence::new(vec![]).unwrap();
    let setup = Setup::new(&model, &obs, TestFunction::parse("indicator1").unwrap()).unwrap();
    assert!((setup.variance(0) - 0.25).abs() < 1e-15);
    let c = clt_variance_check(&setup, 0, 500, 2000, &Harness::new(1, None)).unwrap();
    assert!(c.ratio_ci_low < 1.0 && 1.0 < c.ratio_ci_high, "{c:?}");
}

#[test]
fn concentration_audit_on_coin2() {
    let model = FiniteHmm::coin2();
    let obs = ObservationSequence::new(vec![1.0, 0.0]).unwrap();
    let setup = Setup::new(&model, &obs, TestFunction::parse("indicator1").unwrap()).unwrap();
    let rows = concentration_audit(
        &setup,
        &[50, 200],
        &[0.05, 0.1, 0.2],
        None,
        500,
        &Harness::new(2, None),
    )
    .unwrap();
    assert_eq!(rows.len(), 2 * 3 * 3);
    assert!(rows.iter().all(|r| !r.violated));
    assert!(rows
        .iter()
        .filter(|r| r.bound >= 1.0)
        .all(|r| r.ci_low <= r.bound));
    // the tail frequency shrinks with N at a fixed (t, ε)
    for t in 0..=2 {
        let at = |n| {
            rows.iter()
                .find(|r| r.t == t && r.n == n && r.epsilon == 0.1)
                .unwrap()
                .empirical
        };
        assert!(at(200) <= at(50));
    }
    let identity = Setup::new(&model, &obs, TestFunction::parse("identity").unwrap()).unwrap();
    assert!(
        concentration_audit(&identity, &[50], &[0.1], None, 10, &Harness::new(2, None)).is_ok()
    );
    let linear = Setup::new(&model, &obs, TestFunction::parse("poly:0,1").unwrap()).unwrap();
    assert!(concentration_audit(
        &linear,
        &[50],
        &[0.1],
        Some(1.0),
        10,
        &Harness::new(2, None)
    )
    .is_ok());
}

#[test]
fn replication_failures_report_the_first_index() {
    let h = Harness::new(0, Some(4));
    let err = h
        .run_replications(50, |r| {
            if r == 31 || r == 17 {
                Err(Error::Degeneracy { t: r as usize })
            } else {
                Ok(r)
            }
        })
        .unwrap_err();
    match err {
        Error::Replication { index, source } => {
            assert_eq!(index, 17);
            assert!(matches!(*source, Error::Degeneracy { t: 17 }));
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn calibrated_threshold_hits_near_the_target() {
    let (model, obs) = coin2();
    let setup = Setup::new(&model, &obs, TestFunction::parse("indicator1").unwrap()).unwrap();
    let n = 2_000;
    let b = speed(n, 0.25);
    let delta = calibrate_delta(setup.variance(1), b, 0.1).unwrap();
    let curve = mdp_scaling_curve(
        &setup,
        &[n],
        0.25,
        DeviationSet::TwoSided { delta },
        4000,
        &Harness::new(6, None),
    )
    .unwrap();
    assert!(
        curve[0].ci_low < 0.1 * 1.2 && 0.1 * 0.8 < curve[0].ci_high,
        "{:?}",
        curve[0]
    );
}

#[test]
fn truncation_on_a_finite_model_is_unsupported() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/coin2.toml");
    let config =
        ExperimentConfig::from_file(path, &["experiments=[\"truncation\"]".to_string()]).unwrap();
    let err = run_experiments(&config, &Harness::new(0, None)).unwrap_err();
    assert!(matches!(err, Error::Unsupported(_)), "{err}");
}

#[test]
fn small_run_produces_every_section() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/coin2.toml");
    let overrides = [
        "replications=400".to_string(),
        "n_schedule=[100, 400]".to_string(),
    ];
    let config = ExperimentConfig::from_file(path, &overrides).unwrap();
    let (report, ledger) = run_experiments(&config, &Harness::new(0, None)).unwrap();
    assert_eq!(report.clt.len(), 2);
    assert_eq!(report.rate_curve.len(), 2);
    assert_eq!(report.equivalence.len(), 2);
    assert!(!report.concentration.is_empty());
    assert!(report.paths.is_some());
    assert!((ledger.entry(1).v - 0.265427).abs() < 1e-6);
}
