//! Replicated particle-filter experiments and their theoretical counterparts.
//!
//! Each experiment takes a [`Setup`] (model, observation record, test function, exact
//! ledger) and a [`Harness`] and returns plain records. Replication `r` at particle count
//! `N` always runs the filter on the streams keyed by `(seed, r)`, so two experiments with
//! the same seed and `N` see the same realizations.

mod check;
mod config;
mod harness;
mod registry;
mod report;
pub mod stats;

pub use check::{invariant_check, CheckOutcome};
pub use config::{
    ClassChoice, ConcentrationConfig, DeviationConfig, ExperimentConfig, ExperimentKind,
    ObservationSource, PathConfig, PathShape, TruncationConfig,
};
pub use harness::Harness;
pub use registry::{test_function_names, TestFunction};
pub use report::{
    load_model_and_observations, observations_for, run_experiments, run_ledger, write_ledger,
    write_manifest, write_results, ResultRow, RunReport, OUTPUT_FILES,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ExactModel, ObservationSequence};
use crate::particle::{
    fluctuation_decomposition, particle_profile_path, ExactInputs, ParticleEnsemble, ParticleFilter,
};
use crate::theory::{
    class_membership, truncate_values, tube_minimum, FunctionClassSpec, Membership, PathFunction,
    TheoryContext, VarianceLedger,
};
use stats::{
    jackknife, mean, quantile, sample_variance, two_sided_normal_quantile, wilson_interval, Z95,
};

/// Smallest hit count at the largest `N` for which a deviation probability is reported.
pub const ESTIMABILITY_HITS: f64 = 10.0;
const JACKKNIFE_GROUPS: usize = 20;

/// Everything an experiment needs about one model, observation record and `ψ_T`.
pub struct Setup<'m, M: ExactModel> {
    model: &'m M,
    filter: ParticleFilter<'m, M>,
    psi: TestFunction,
    theory: TheoryContext<M::State>,
    ledger: VarianceLedger,
    psi_nodes: Vec<f64>,
}

impl<'m, M: ExactModel> Setup<'m, M> {
    pub fn new(model: &'m M, obs: &ObservationSequence, psi: TestFunction) -> Result<Self> {
        let filter = ParticleFilter::new(model, obs)?;
        let theory = TheoryContext::new(model, obs)?;
        let f = psi.as_fn();
        let psi_nodes = theory.eval(move |x| f(M::coordinate(x)));
        if let Some((index, &x)) = psi_nodes.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteIntegrand { index, x });
        }
        let ledger = theory.ledger(&psi_nodes)?;
        Ok(Setup {
            model,
            filter,
            psi,
            theory,
            ledger,
            psi_nodes,
        })
    }

    pub fn model(&self) -> &M {
        self.model
    }

    pub fn horizon(&self) -> usize {
        self.theory.horizon()
    }

    pub fn test_function(&self) -> &TestFunction {
        &self.psi
    }

    pub fn theory(&self) -> &TheoryContext<M::State> {
        &self.theory
    }

    pub fn ledger(&self) -> &VarianceLedger {
        &self.ledger
    }

    pub fn psi_nodes(&self) -> &[f64] {
        &self.psi_nodes
    }

    /// `m_t(ψ)`.
    pub fn mean(&self, t: usize) -> f64 {
        self.ledger.entry(t).m
    }

    /// `V_t(ψ)`.
    pub fn variance(&self, t: usize) -> f64 {
        self.ledger.entry(t).v
    }

    fn psi_state(&self) -> impl Fn(M::State) -> f64 + Clone {
        let f = self.psi.as_fn();
        move |x| f(M::coordinate(x))
    }

    /// `‖ψ‖∞`: the closed form if known, else the maximum over the nodes of a finite state space.
    pub fn sup_norm(&self) -> Option<f64> {
        self.psi.sup_norm().or_else(|| {
            self.theory
                .discretization()
                .is_finite()
                .then(|| self.psi_nodes.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        })
    }

    /// The generation at `t` of replication `rep`.
    fn final_generation(
        &self,
        n: usize,
        t: usize,
        seed: u64,
        rep: u64,
    ) -> Result<ParticleEnsemble<M::State>> {
        self.filter.run_with(n, t, seed, rep, |_| {})
    }

    /// `M_N^t(ψ) = (b_N √N)^{-1} Σ (ψ(x_i) − m_t(ψ))` for every replication.
    pub fn fluctuations(
        &self,
        t: usize,
        n: usize,
        b_n: f64,
        replications: usize,
        h: &Harness,
    ) -> Result<Vec<f64>> {
        let m = self.mean(t);
        let scale = 1.0 / (b_n * (n as f64).sqrt());
        h.run_replications(replications, |rep| {
            let e = self.final_generation(n, t, h.seed, rep)?;
            let psi = self.psi_state();
            Ok(scale * e.particles().iter().map(|&x| psi(x) - m).sum::<f64>())
        })
    }
}

/// Empirical variance of `√N (m_{N,t} − m_t)` against the recursion value `V_t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CltCheck {
    pub t: usize,
    pub n: usize,
    pub replications: usize,
    pub empirical_variance: f64,
    /// Jackknife standard error of the empirical variance.
    pub standard_error: f64,
    pub v: f64,
    /// `empirical / V`, defined as 1 when both vanish.
    pub ratio: f64,
    pub ratio_ci_low: f64,
    pub ratio_ci_high: f64,
}

pub fn clt_variance_check<M: ExactModel>(
    setup: &Setup<'_, M>,
    t: usize,
    n: usize,
    replications: usize,
    h: &Harness,
) -> Result<CltCheck> {
    let z = setup.fluctuations(t, n, 1.0, replications, h)?;
    let (var, se) = jackknife(&z, JACKKNIFE_GROUPS, sample_variance);
    let v = setup.variance(t);
    let ratio_of = |x: f64| {
        if v > 0.0 {
            x / v
        } else if x == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    };
    let se = if se.is_nan() { 0.0 } else { se };
    Ok(CltCheck {
        t,
        n,
        replications,
        empirical_variance: var,
        standard_error: se,
        v,
        ratio: ratio_of(var),
        ratio_ci_low: ratio_of((var - Z95 * se).max(0.0)),
        ratio_ci_high: ratio_of(var + Z95 * se),
    })
}

/// The deviation event `Γ` for `M_N^T(ψ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviationSet {
    /// `{|x| > δ}`.
    TwoSided { delta: f64 },
    /// The open interval `(lo, hi)`.
    Interval { lo: f64, hi: f64 },
}

impl DeviationSet {
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            DeviationSet::TwoSided { delta } => x.abs() > delta,
            DeviationSet::Interval { lo, hi } => lo < x && x < hi,
        }
    }

    /// `inf_Γ x² / (2V)`, `+∞` when `V = 0` and `0 ∉ closure(Γ)`.
    pub fn rate(&self, v: f64) -> f64 {
        let d: f64 = match *self {
            DeviationSet::TwoSided { delta } => delta,
            DeviationSet::Interval { lo, hi } => {
                if lo <= 0.0 && 0.0 <= hi {
                    0.0
                } else {
                    lo.abs().min(hi.abs())
                }
            }
        };
        if d == 0.0 {
            0.0
        } else if v > 0.0 {
            d * d / (2.0 * v)
        } else {
            f64::INFINITY
        }
    }
}

/// `δ = z √V / b_N` with `2(1 − Φ(z)) = target`: the threshold a Gaussian limit with variance
/// `V / b_N²` exceeds with probability `target`.
pub fn calibrate_delta(v: f64, b_n: f64, target: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::Estimability(
            "V_T(psi) = 0, so no threshold is reachable; set the deviation threshold explicitly"
                .into(),
        ));
    }
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target probability {target} must lie in (0, 1)"
        )));
    }
    Ok(two_sided_normal_quantile(target) * v.sqrt() / b_n)
}

/// Empirical deviation probability at one `N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeviationEstimate {
    pub n: usize,
    pub b_n: f64,
    pub hits: usize,
    pub replications: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `−log(p̂) / b_N²`.
    pub normalized_rate: f64,
    /// `inf_Γ I_T`.
    pub theoretical_rate: f64,
}

impl DeviationEstimate {
    fn from_hits(
        n: usize,
        b_n: f64,
        hits: usize,
        replications: usize,
        theoretical_rate: f64,
    ) -> Self {
        let p_hat = hits as f64 / replications as f64;
        let (ci_low, ci_high) = wilson_interval(hits, replications, Z95);
        DeviationEstimate {
            n,
            b_n,
            hits,
            replications,
            p_hat,
            ci_low,
            ci_high,
            normalized_rate: (-p_hat.ln() / (b_n * b_n)).max(0.0),
            theoretical_rate,
        }
    }

    fn guard(&self) -> Result<()> {
        if self.theoretical_rate.is_finite() && (self.hits as f64) < ESTIMABILITY_HITS {
            return Err(Error::Estimability(format!(
                "p_hat = {} at N = {} is below {}/R = {}; use a smaller threshold or more replications",
                self.p_hat,
                self.n,
                ESTIMABILITY_HITS,
                ESTIMABILITY_HITS / self.replications as f64
            )));
        }
        Ok(())
    }
}

/// `b_N = N^α`.
pub fn speed(n: usize, alpha: f64) -> f64 {
    (n as f64).powf(alpha)
}

/// `P(M_N^T(ψ) ∈ Γ)` over the schedule, with the guard applied at the largest `N`.
pub fn mdp_scaling_curve<M: ExactModel>(
    setup: &Setup<'_, M>,
    schedule: &[usize],
    alpha: f64,
    set: DeviationSet,
    replications: usize,
    h: &Harness,
) -> Result<Vec<DeviationEstimate>> {
    let t = setup.horizon();
    let rate = set.rate(setup.variance(t));
    let mut out = Vec::with_capacity(schedule.len());
    for &n in schedule {
        let b = speed(n, alpha);
        let m = setup.fluctuations(t, n, b, replications, h)?;
        let hits = m.iter().filter(|&&x| set.contains(x)).count();
        out.push(DeviationEstimate::from_hits(n, b, hits, replications, rate));
    }
    if let Some(last) = out.iter().max_by_key(|e| e.n) {
        last.guard()?;
    }
    Ok(out)
}

/// One cell of the concentration audit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConcentrationAuditRow {
    pub t: usize,
    pub n: usize,
    pub epsilon: f64,
    pub hits: usize,
    pub replications: usize,
    pub empirical: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub alpha: f64,
    pub beta: f64,
    pub bound: f64,
    /// The lower confidence limit exceeds the bound.
    pub violated: bool,
}

/// `P(|N^{-1} Σ ψ(x_{i,t}) − m_t(ψ)| > ε)` against `α(t) exp(−N ε² / (β(t) ‖ψ‖∞²))` for every
/// `t ≤ T`, from one filter run per replication and `N`.
pub fn concentration_audit<M: ExactModel>(
    setup: &Setup<'_, M>,
    schedule: &[usize],
    epsilons: &[f64],
    sup_norm: Option<f64>,
    replications: usize,
    h: &Harness,
) -> Result<Vec<ConcentrationAuditRow>> {
    let sup = sup_norm.or_else(|| setup.sup_norm()).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "test function `{}` has no known sup norm; supply one",
            setup.psi.name()
        ))
    })?;
    let horizon = setup.horizon();
    let means: Vec<f64> = (0..=horizon).map(|t| setup.mean(t)).collect();
    let constants = &setup.ledger.concentration;
    let mut rows = Vec::new();
    for &n in schedule {
        let deviations = h.run_replications(replications, |rep| {
            let mut d = Vec::with_capacity(horizon + 1);
            let psi = setup.psi_state();
            setup.filter.run_with(n, horizon, h.seed, rep, |e| {
                let m = e.particles().iter().map(|&x| psi(x)).sum::<f64>() / n as f64;
                d.push((m - means[e.time_index()]).abs());
            })?;
            Ok(d)
        })?;
        for t in 0..=horizon {
            let c = constants[t];
            for &epsilon in epsilons {
                let hits = deviations.iter().filter(|d| d[t] > epsilon).count();
                let (ci_low, ci_high) = wilson_interval(hits, replications, Z95);
                let bound = crate::theory::concentration_bound(n, epsilon, sup, c.alpha, c.beta);
                rows.push(ConcentrationAuditRow {
                    t,
                    n,
                    epsilon,
                    hits,
                    replications,
                    empirical: hits as f64 / replications as f64,
                    ci_low,
                    ci_high,
                    alpha: c.alpha,
                    beta: c.beta,
                    bound,
                    violated: ci_low > bound,
                });
            }
        }
    }
    Ok(rows)
}

/// Quantiles of `|R − R̃|` and of `K_N` at one `N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EquivalenceSummary {
    pub n: usize,
    pub b_n: f64,
    pub replications: usize,
    pub abs_diff_median: f64,
    pub abs_diff_q90: f64,
    pub abs_diff_max: f64,
    /// `|R − R̃| / max(|R̃|, 1e-12)`.
    pub rel_diff_median: f64,
    pub rel_diff_q90: f64,
    pub rel_diff_max: f64,
    pub abs_r_tilde_median: f64,
    pub k_mean: f64,
    pub k_standard_error: f64,
}

/// Per-replication fluctuation records at time `T` for one `N`.
pub fn fluctuation_records<M: ExactModel>(
    setup: &Setup<'_, M>,
    n: usize,
    b_n: f64,
    replications: usize,
    h: &Harness,
) -> Result<Vec<crate::particle::FluctuationRecord>> {
    let t = setup.horizon();
    let entry = setup.ledger.entry(t);
    let exact = ExactInputs {
        mean: entry.m,
        variance: entry.sigma_sq,
        kappa: entry.kappa.unwrap_or(1.0),
    };
    h.run_replications(replications, |rep| {
        let mut previous = None;
        let mut current = None;
        setup.filter.run_with(n, t, h.seed, rep, |e| {
            if e.time_index() + 1 == t {
                previous = Some(e.clone());
            } else if e.time_index() == t {
                current = Some(e.clone());
            }
        })?;
        let current = current.expect("the visitor sees generation T");
        let prev = previous.as_ref().map(|p| (p, setup.filter.kernel(t)));
        fluctuation_decomposition(&current, prev, setup.psi_state(), exact, b_n)
    })
}

pub fn equivalence_diagnostic<M: ExactModel>(
    setup: &Setup<'_, M>,
    schedule: &[usize],
    alpha: f64,
    replications: usize,
    h: &Harness,
) -> Result<Vec<EquivalenceSummary>> {
    schedule
        .iter()
        .map(|&n| {
            let b = speed(n, alpha);
            let recs = fluctuation_records(setup, n, b, replications, h)?;
            let diff: Vec<f64> = recs.iter().map(|r| (r.r - r.r_tilde).abs()).collect();
            let rel: Vec<f64> = recs
                .iter()
                .map(|r| (r.r - r.r_tilde).abs() / r.r_tilde.abs().max(1e-12))
                .collect();
            let rt: Vec<f64> = recs.iter().map(|r| r.r_tilde.abs()).collect();
            let k: Vec<f64> = recs.iter().map(|r| r.k_n).collect();
            Ok(EquivalenceSummary {
                n,
                b_n: b,
                replications,
                abs_diff_median: quantile(&diff, 0.5),
                abs_diff_q90: quantile(&diff, 0.9),
                abs_diff_max: quantile(&diff, 1.0),
                rel_diff_median: quantile(&rel, 0.5),
                rel_diff_q90: quantile(&rel, 0.9),
                rel_diff_max: quantile(&rel, 1.0),
                abs_r_tilde_median: quantile(&rt, 0.5),
                k_mean: mean(&k),
                k_standard_error: (sample_variance(&k) / k.len() as f64).sqrt(),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TruncationRow {
    pub c: f64,
    /// `V_T(ψ^c)`.
    pub v_truncated: f64,
    pub v_full: f64,
    /// `|V_T(ψ^c) − V_T(ψ)| / V_T(ψ)`.
    pub relative_difference: f64,
    /// `∫ (ψ̄^c)² f_{T|T} dμ`.
    pub remainder_second_moment: f64,
    /// `∫ ψ² f_{T|T} dμ`.
    pub second_moment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruncationStudy {
    pub membership: Option<Membership>,
    pub rows: Vec<TruncationRow>,
}

/// `V_T(ψ^c)` along a schedule of truncation levels, after checking that `ψ` is not
/// reported outside its class.
pub fn truncation_study<S: Copy + Send + Sync>(
    theory: &TheoryContext<S>,
    psi_nodes: &[f64],
    c_schedule: &[f64],
    class: Option<(&FunctionClassSpec, &(dyn Fn(f64) -> f64 + Sync))>,
) -> Result<TruncationStudy> {
    let membership = class.map(|(spec, psi)| class_membership(spec, psi));
    if let Some(m) = &membership {
        if m.verdict == crate::theory::ClassVerdict::NonMember {
            return Err(Error::Divergent(format!(
                "the test function is outside its class (witness beta = {:?})",
                m.witness_beta
            )));
        }
    }
    if let Some((index, &x)) = psi_nodes.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteIntegrand { index, x });
    }
    let t = theory.horizon();
    let v_full = theory.variance(t, psi_nodes)?;
    let squares: Vec<f64> = psi_nodes.iter().map(|v| v * v).collect();
    let second_moment = theory.mean(t, &squares);
    let rows = c_schedule
        .iter()
        .map(|&c| {
            let (kept, rest) = truncate_values(psi_nodes, c);
            let v_truncated = theory.variance(t, &kept)?;
            let rest_sq: Vec<f64> = rest.iter().map(|v| v * v).collect();
            Ok(TruncationRow {
                c,
                v_truncated,
                v_full,
                relative_difference: if v_full > 0.0 {
                    (v_truncated - v_full).abs() / v_full
                } else {
                    (v_truncated - v_full).abs()
                },
                remainder_second_moment: theory.mean(t, &rest_sq),
                second_moment,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TruncationStudy { membership, rows })
}

/// Target path for the functional experiment.
pub fn target_path(shape: PathShape, endpoint: f64, knee: f64) -> Result<PathFunction> {
    match shape {
        PathShape::Linear => Ok(PathFunction::linear(endpoint)),
        PathShape::Ramp => {
            if knee >= 1.0 {
                Ok(PathFunction::linear(endpoint))
            } else {
                PathFunction::ramp(endpoint, knee)
            }
        }
        PathShape::Zero => Ok(PathFunction::linear(0.0)),
    }
}

/// `P(‖M^ψ_{N,T} − f‖∞ < η)` for one target path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathEstimate {
    pub shape: PathShape,
    pub n: usize,
    pub b_n: f64,
    pub eta: f64,
    pub hits: usize,
    pub replications: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub normalized_rate: f64,
    /// `inf {J_T(g) : ‖g − f‖∞ < η}` over piecewise-linear `g`.
    pub theoretical_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathExperiment {
    pub estimates: Vec<PathEstimate>,
    /// `P(M^ψ_{N,T}(1) ∈ Γ)` from the same realizations.
    pub endpoint: Option<DeviationEstimate>,
}

#[allow(clippy::too_many_arguments)]
pub fn functional_path_experiment<M: ExactModel>(
    setup: &Setup<'_, M>,
    n: usize,
    alpha: f64,
    targets: &[(PathShape, PathFunction)],
    eta: f64,
    cells: usize,
    endpoint_set: Option<DeviationSet>,
    replications: usize,
    h: &Harness,
) -> Result<PathExperiment> {
    if setup.sup_norm().is_none() {
        return Err(Error::InvalidParameter(format!(
            "the path experiment needs a bounded test function; `{}` is not known to be bounded",
            setup.psi.name()
        )));
    }
    let t = setup.horizon();
    let b = speed(n, alpha);
    let m = setup.mean(t);
    let (sigma_sq, v) = (setup.ledger.entry(t).sigma_sq, setup.variance(t));
    let outcomes = h.run_replications(replications, |rep| {
        let e = setup.final_generation(n, t, h.seed, rep)?;
        let path = particle_profile_path(&e, setup.psi_state(), m, b)?;
        let inside: Vec<bool> = targets
            .iter()
            .map(|(_, f)| path.sup_distance(|u| f.eval(u)) < eta)
            .collect();
        Ok((inside, path.endpoint()))
    })?;
    let mut estimates = Vec::with_capacity(targets.len());
    for (k, (shape, f)) in targets.iter().enumerate() {
        let hits = outcomes.iter().filter(|(inside, _)| inside[k]).count();
        let theoretical = tube_minimum(sigma_sq, v, f, eta, cells)?.value;
        let d = DeviationEstimate::from_hits(n, b, hits, replications, theoretical);
        d.guard()?;
        estimates.push(PathEstimate {
            shape: *shape,
            n,
            b_n: b,
            eta,
            hits,
            replications,
            p_hat: d.p_hat,
            ci_low: d.ci_low,
            ci_high: d.ci_high,
            normalized_rate: d.normalized_rate,
            theoretical_rate: theoretical,
        });
    }
    let endpoint = endpoint_set.map(|set| {
        let hits = outcomes.iter().filter(|(_, x)| set.contains(*x)).count();
        DeviationEstimate::from_hits(n, b, hits, replications, set.rate(v))
    });
    Ok(PathExperiment {
        estimates,
        endpoint,
    })
}
