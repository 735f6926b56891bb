use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::calibrate_delta;
use super::config::ClassChoice;
use super::{
    clt_variance_check, concentration_audit, equivalence_diagnostic, functional_path_experiment,
    mdp_scaling_curve, speed, target_path, truncation_study, CltCheck, ConcentrationAuditRow,
    DeviationEstimate, DeviationSet, EquivalenceSummary, ExperimentConfig, ExperimentKind, Harness,
    PathExperiment, Setup, TestFunction, TruncationStudy,
};
use crate::error::{Error, Result};
use crate::model::{
    simulate_trajectory, ContinuousModel, ExactModel, ModelSpec, ObservationSequence,
    StateSpaceModel,
};
use crate::stream::seeded;
use crate::theory::{ClassKind, FunctionClassSpec, TheoryContext, VarianceLedger};

/// Files a run may create, in the order they are written.
pub const OUTPUT_FILES: [&str; 4] = [
    "manifest.json",
    "ledger.json",
    "results.csv",
    "rate_vs_n.csv",
];

/// One line of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub metric: String,
    pub value: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

impl ResultRow {
    fn new(
        experiment: ExperimentKind,
        n: Option<usize>,
        metric: impl Into<String>,
        value: f64,
    ) -> Self {
        ResultRow {
            experiment: experiment.label().into(),
            n,
            metric: metric.into(),
            value,
            ci_low: None,
            ci_high: None,
        }
    }

    fn ci(mut self, lo: f64, hi: f64) -> Self {
        self.ci_low = Some(lo);
        self.ci_high = Some(hi);
        self
    }
}

/// Everything one `run` produced.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RunReport {
    pub deviation_set: Option<DeviationSet>,
    pub clt: Vec<CltCheck>,
    pub rate_curve: Vec<DeviationEstimate>,
    pub concentration: Vec<ConcentrationAuditRow>,
    pub equivalence: Vec<EquivalenceSummary>,
    pub truncation: Option<TruncationStudy>,
    pub paths: Option<PathExperiment>,
    pub rows: Vec<ResultRow>,
}

/// The observation record named by the config, cut to the configured horizon.
pub fn observations_for<M: StateSpaceModel>(
    config: &ExperimentConfig,
    model: &M,
) -> Result<ObservationSequence> {
    let t = config.horizon;
    let src = &config.observations;
    let obs = if let Some(v) = &src.values {
        ObservationSequence::new(v.clone())?
    } else if let Some(path) = &src.file {
        ObservationSequence::from_csv(path)?
    } else {
        let seed = src.simulate_seed.unwrap_or(config.seed);
        simulate_trajectory(model, t, &mut seeded(seed))?.1
    };
    if obs.horizon() < t {
        return Err(Error::config(
            "observations",
            format!("{} observations for horizon {t}", obs.horizon()),
        ));
    }
    Ok(obs.prefix(t))
}

pub fn load_model_and_observations(
    config: &ExperimentConfig,
) -> Result<(ModelSpec, ObservationSequence)> {
    let spec = ModelSpec::resolve(&config.model)?;
    let obs = match &spec {
        ModelSpec::Finite(m) => observations_for(config, m)?,
        ModelSpec::Continuous(m) => observations_for(config, m)?,
    };
    Ok((spec, obs))
}

/// Theory values only: no particles are drawn.
pub fn run_ledger(config: &ExperimentConfig) -> Result<VarianceLedger> {
    let (spec, obs) = load_model_and_observations(config)?;
    let psi = TestFunction::parse(&config.test_function)?;
    match &spec {
        ModelSpec::Finite(m) => Ok(Setup::new(m, &obs, psi)?.ledger().clone()),
        ModelSpec::Continuous(m) => Ok(Setup::new(m, &obs, psi)?.ledger().clone()),
    }
}

fn deviation_set<M: ExactModel>(
    config: &ExperimentConfig,
    setup: &Setup<'_, M>,
) -> Result<DeviationSet> {
    let d = &config.deviation;
    if let Some(delta) = d.delta {
        return Ok(DeviationSet::TwoSided { delta });
    }
    if let Some([lo, hi]) = d.interval {
        return Ok(DeviationSet::Interval { lo, hi });
    }
    let n_max = *config
        .n_schedule
        .iter()
        .max()
        .expect("schedule is non-empty");
    let target = (d.target_hits / config.replications as f64).min(0.5);
    let delta = calibrate_delta(
        setup.variance(setup.horizon()),
        speed(n_max, config.alpha),
        target,
    )?;
    Ok(DeviationSet::TwoSided { delta })
}

fn run_model<'m, M: ExactModel>(
    model: &'m M,
    obs: &ObservationSequence,
    config: &ExperimentConfig,
    h: &Harness,
) -> Result<(RunReport, Setup<'m, M>)> {
    let psi = TestFunction::parse(&config.test_function)?;
    let setup = Setup::new(model, obs, psi)?;
    let t = setup.horizon();
    let r = config.replications;
    let mut report = RunReport::default();
    let needs_set = config.runs(ExperimentKind::Mdp) || config.runs(ExperimentKind::Path);
    if needs_set {
        report.deviation_set = Some(deviation_set(config, &setup)?);
    }
    let mut rows = Vec::new();
    if config.runs(ExperimentKind::Clt) {
        for &n in &config.n_schedule {
            let c = clt_variance_check(&setup, t, n, r, h)?;
            let k = ExperimentKind::Clt;
            rows.push(
                ResultRow::new(k, Some(n), "empirical_variance", c.empirical_variance).ci(
                    c.empirical_variance - super::Z95 * c.standard_error,
                    c.empirical_variance + super::Z95 * c.standard_error,
                ),
            );
            rows.push(ResultRow::new(k, Some(n), "v", c.v));
            rows.push(
                ResultRow::new(k, Some(n), "ratio", c.ratio).ci(c.ratio_ci_low, c.ratio_ci_high),
            );
            report.clt.push(c);
        }
    }
    if config.runs(ExperimentKind::Mdp) {
        let set = report.deviation_set.expect("set above");
        report.rate_curve = mdp_scaling_curve(&setup, &config.n_schedule, config.alpha, set, r, h)?;
        let k = ExperimentKind::Mdp;
        for e in &report.rate_curve {
            let b2 = e.b_n * e.b_n;
            rows.push(ResultRow::new(k, Some(e.n), "p_hat", e.p_hat).ci(e.ci_low, e.ci_high));
            rows.push(
                ResultRow::new(k, Some(e.n), "normalized_rate", e.normalized_rate).ci(
                    (-e.ci_high.ln() / b2).max(0.0),
                    (-e.ci_low.ln() / b2).max(0.0),
                ),
            );
            rows.push(ResultRow::new(
                k,
                Some(e.n),
                "theoretical_rate",
                e.theoretical_rate,
            ));
        }
    }
    if config.runs(ExperimentKind::Concentration) {
        report.concentration = concentration_audit(
            &setup,
            &config.n_schedule,
            &config.concentration.epsilon,
            config.concentration.sup_norm,
            r,
            h,
        )?;
        let k = ExperimentKind::Concentration;
        for c in &report.concentration {
            let tag = format!("[t={},eps={}]", c.t, c.epsilon);
            rows.push(
                ResultRow::new(k, Some(c.n), format!("tail{tag}"), c.empirical)
                    .ci(c.ci_low, c.ci_high),
            );
            rows.push(ResultRow::new(k, Some(c.n), format!("bound{tag}"), c.bound));
            rows.push(ResultRow::new(
                k,
                Some(c.n),
                format!("violated{tag}"),
                c.violated as u8 as f64,
            ));
        }
    }
    if config.runs(ExperimentKind::Equivalence) {
        if t == 0 {
            return Err(Error::InvalidParameter(
                "the equivalence diagnostic needs T >= 1".into(),
            ));
        }
        report.equivalence =
            equivalence_diagnostic(&setup, &config.n_schedule, config.alpha, r, h)?;
        let k = ExperimentKind::Equivalence;
        for e in &report.equivalence {
            for (metric, value) in [
                ("abs_diff_median", e.abs_diff_median),
                ("abs_diff_q90", e.abs_diff_q90),
                ("abs_diff_max", e.abs_diff_max),
                ("rel_diff_median", e.rel_diff_median),
                ("rel_diff_q90", e.rel_diff_q90),
                ("rel_diff_max", e.rel_diff_max),
                ("abs_r_tilde_median", e.abs_r_tilde_median),
            ] {
                rows.push(ResultRow::new(k, Some(e.n), metric, value));
            }
            rows.push(ResultRow::new(k, Some(e.n), "k_mean", e.k_mean).ci(
                e.k_mean - super::Z95 * e.k_standard_error,
                e.k_mean + super::Z95 * e.k_standard_error,
            ));
        }
    }
    if config.runs(ExperimentKind::Path) {
        let set = report.deviation_set.expect("set above");
        let p = &config.path;
        let endpoint = p.endpoint.unwrap_or(match set {
            DeviationSet::TwoSided { delta } => delta,
            DeviationSet::Interval { lo, hi } => 0.5 * (lo + hi),
        });
        let eta = p.eta.unwrap_or(0.5 * endpoint.abs()).max(f64::MIN_POSITIVE);
        let targets = p
            .shapes
            .iter()
            .map(|&s| Ok((s, target_path(s, endpoint, p.knee)?)))
            .collect::<Result<Vec<_>>>()?;
        let n = *config
            .n_schedule
            .iter()
            .max()
            .expect("schedule is non-empty");
        let exp = functional_path_experiment(
            &setup,
            n,
            config.alpha,
            &targets,
            eta,
            p.cells,
            Some(set),
            r,
            h,
        )?;
        let k = ExperimentKind::Path;
        for e in &exp.estimates {
            let label = format!("{:?}", e.shape).to_lowercase();
            rows.push(
                ResultRow::new(k, Some(n), format!("p_hat[{label}]"), e.p_hat)
                    .ci(e.ci_low, e.ci_high),
            );
            rows.push(ResultRow::new(
                k,
                Some(n),
                format!("normalized_rate[{label}]"),
                e.normalized_rate,
            ));
            rows.push(ResultRow::new(
                k,
                Some(n),
                format!("theoretical_rate[{label}]"),
                e.theoretical_rate,
            ));
        }
        if let Some(e) = &exp.endpoint {
            rows.push(
                ResultRow::new(k, Some(n), "endpoint_p_hat", e.p_hat).ci(e.ci_low, e.ci_high),
            );
        }
        report.paths = Some(exp);
    }
    report.rows = rows;
    Ok((report, setup))
}

/// Envelope for the class check of a continuous model: the Gaussian with the moments of
/// the one-step predictor at `T`, times the emission slice at `y_T`.
fn predictor_envelope(
    model: &ContinuousModel,
    theory: &TheoryContext<f64>,
    obs: &ObservationSequence,
    class: ClassKind,
) -> Result<FunctionClassSpec> {
    let t = theory.horizon();
    let (mean, var) = if t == 0 {
        theory.exact_run().filter(0).moments()
    } else {
        theory.exact_run().predictors[t - 1].moments()
    };
    if !(var > 0.0) {
        return Err(Error::Unsupported(
            "degenerate predictor; no Gaussian envelope".into(),
        ));
    }
    let log_norm = -0.5 * (2.0 * std::f64::consts::PI * var).ln();
    let emission = model.clone();
    let y = if t == 0 { None } else { Some(obs.get(t)) };
    FunctionClassSpec::new(
        move |x| log_norm - (x - mean) * (x - mean) / (2.0 * var),
        move |x| y.map_or(0.0, |y| emission.log_emission_density(t, x, y)),
        class,
    )
}

pub fn run_experiments(
    config: &ExperimentConfig,
    h: &Harness,
) -> Result<(RunReport, VarianceLedger)> {
    let (spec, obs) = load_model_and_observations(config)?;
    match &spec {
        ModelSpec::Finite(m) => {
            if config.runs(ExperimentKind::Truncation) {
                return Err(Error::Unsupported(
                    "the truncation study needs a continuous model with a quadrature grid".into(),
                ));
            }
            let (report, setup) = run_model(m, &obs, config, h)?;
            Ok((report, setup.ledger().clone()))
        }
        ModelSpec::Continuous(m) => {
            let (mut report, setup) = run_model(m, &obs, config, h)?;
            if config.runs(ExperimentKind::Truncation) {
                let class = match config.truncation.class {
                    ClassChoice::Exponential => ClassKind::Exponential,
                    ClassChoice::Subexponential => ClassKind::Subexponential {
                        alpha: config.alpha,
                    },
                };
                let envelope = predictor_envelope(m, setup.theory(), &obs, class)?;
                let psi = setup.test_function().as_fn();
                let study = truncation_study(
                    setup.theory(),
                    setup.psi_nodes(),
                    &config.truncation.c_schedule,
                    Some((&envelope, &psi)),
                )?;
                let k = ExperimentKind::Truncation;
                for row in &study.rows {
                    let tag = format!("[c={}]", row.c);
                    report.rows.push(ResultRow::new(
                        k,
                        None,
                        format!("v_truncated{tag}"),
                        row.v_truncated,
                    ));
                    report.rows.push(ResultRow::new(
                        k,
                        None,
                        format!("relative_difference{tag}"),
                        row.relative_difference,
                    ));
                    report.rows.push(ResultRow::new(
                        k,
                        None,
                        format!("remainder_second_moment{tag}"),
                        row.remainder_second_moment,
                    ));
                }
                if let Some(row) = study.rows.first() {
                    report
                        .rows
                        .push(ResultRow::new(k, None, "v_full", row.v_full));
                    report
                        .rows
                        .push(ResultRow::new(k, None, "second_moment", row.second_moment));
                }
                report.truncation = Some(study);
            }
            Ok((report, setup.ledger().clone()))
        }
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(
        File::create(&path).map_err(|e| Error::io(&path, e))?,
    ))
}

fn finish(mut w: BufWriter<File>, name: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(name, e))
}

#[derive(Serialize)]
struct Manifest<'a> {
    name: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a ExperimentConfig,
    /// The config as TOML; parsing it reproduces `config`.
    config_echo: String,
    outputs: &'a [&'a str],
}

/// Write `manifest.json` into `dir`, creating the directory if needed.
pub fn write_manifest(dir: &Path, config: &ExperimentConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        name: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        config,
        config_echo: config.echo()?,
        outputs: &OUTPUT_FILES,
    };
    let path = dir.join(OUTPUT_FILES[0]);
    let mut w = create(dir, OUTPUT_FILES[0])?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    finish(w, &path)?;
    Ok(path)
}

#[derive(Serialize)]
struct LedgerFile<'a> {
    test_function: &'a str,
    observations: &'a [f64],
    #[serde(flatten)]
    ledger: &'a VarianceLedger,
}

pub fn write_ledger(
    dir: &Path,
    config: &ExperimentConfig,
    obs: &ObservationSequence,
    ledger: &VarianceLedger,
) -> Result<PathBuf> {
    let path = dir.join(OUTPUT_FILES[1]);
    let mut w = create(dir, OUTPUT_FILES[1])?;
    let file = LedgerFile {
        test_function: &config.test_function,
        observations: obs.values(),
        ledger,
    };
    serde_json::to_writer_pretty(&mut w, &file)?;
    finish(w, &path)?;
    Ok(path)
}

/// `results.csv` and, when the scaling curve ran, `rate_vs_n.csv`.
pub fn write_results(dir: &Path, report: &RunReport) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let path = dir.join(OUTPUT_FILES[2]);
    let mut w = csv::Writer::from_writer(create(dir, OUTPUT_FILES[2])?);
    if report.rows.is_empty() {
        w.write_record(["experiment", "N", "metric", "value", "ci_low", "ci_high"])?;
    }
    for row in &report.rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);
    if !report.rate_curve.is_empty() {
        let path = dir.join(OUTPUT_FILES[3]);
        let mut w = csv::Writer::from_writer(create(dir, OUTPUT_FILES[3])?);
        for e in &report.rate_curve {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
