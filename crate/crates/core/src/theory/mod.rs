//! Asymptotic quantities of the particle filter, computed on the exact node set.
//!
//! Everything here is deterministic given a model and an observation record:
//! the operator `L_t`, the constants `κ_t` and `γ_t`, the recursions for the
//! asymptotic variance `V_t(ψ)` and covariances `V_{r,t}`, the matrix `V_T`,
//! the rate functions and the concentration constants.

mod classes;
mod concentration;
mod rates;

pub use classes::{
    class_membership, truncate, truncate_values, ClassKind, ClassVerdict, FunctionClassSpec,
    Membership,
};
pub use concentration::{concentration_bound, concentration_constants, ConcentrationRow};
pub use rates::{
    contraction_minimum, log_mgf_finite, minimize_box_qp, rate_I, rate_J, rate_J_finite,
    rate_increments, tube_minimum, PathFunction, PathRate,
};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{Discretization, ExactFilterRun, ExactSystem, FilterDensity};
use crate::model::{ExactModel, ObservationSequence};

/// `sup_x L_t1(x)` over the nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Gamma {
    pub value: f64,
    /// Set when the supremum sits on the boundary of a grid and is still growing there,
    /// i.e. the node maximum is only a lower bound of an unbounded function.
    pub unbounded: bool,
}

impl Gamma {
    /// The value to feed into bounds: `+∞` when flagged.
    pub fn effective(&self) -> f64 {
        if self.unbounded {
            f64::INFINITY
        } else {
            self.value
        }
    }
}

/// The exact filter of a model along an observation record, plus the operators built on it.
pub struct TheoryContext<S> {
    name: String,
    system: ExactSystem<S>,
    run: ExactFilterRun,
}

impl<S: Copy + Send + Sync> TheoryContext<S> {
    pub fn new<M: ExactModel<State = S>>(model: &M, obs: &ObservationSequence) -> Result<Self> {
        let system = ExactSystem::new(model, obs);
        let run = system.run()?;
        Ok(TheoryContext {
            name: model.name().to_string(),
            system,
            run,
        })
    }

    pub fn horizon(&self) -> usize {
        self.system.horizon()
    }

    pub fn discretization(&self) -> &Discretization<S> {
        self.system.discretization()
    }

    pub fn system(&self) -> &ExactSystem<S> {
        &self.system
    }

    pub fn exact_run(&self) -> &ExactFilterRun {
        &self.run
    }

    /// A test function evaluated at the nodes.
    pub fn eval(&self, psi: impl Fn(S) -> f64) -> Vec<f64> {
        self.discretization().eval(psi)
    }

    /// `f_{t|t}` at the nodes.
    pub fn filter(&self, t: usize) -> &[f64] {
        self.run
            .filter(t)
            .values()
            .expect("node backends carry values")
    }

    /// `L_tψ(x_i) = Σ_j a_t(x_i, x_j) b_t(x_j, y_t) ψ(x_j) w_j`.
    pub fn apply_l(&self, t: usize, psi: &[f64]) -> Vec<f64> {
        let n = self.discretization().len();
        let a = self.system.transition(t);
        let g: Vec<f64> = self
            .discretization()
            .weights()
            .iter()
            .zip(self.system.emission(t))
            .zip(psi)
            .map(|((w, b), p)| if *b == 0.0 { 0.0 } else { w * b * p })
            .collect();
        (0..n)
            .map(|i| {
                a[i * n..(i + 1) * n]
                    .iter()
                    .zip(&g)
                    .map(|(a, g)| a * g)
                    .sum()
            })
            .collect()
    }

    /// `κ_t = ∫ L_t1 f_{t-1|t-1} dμ`.
    pub fn kappa(&self, t: usize) -> Result<f64> {
        self.check_time(t, 1)?;
        let l1 = self.apply_l(t, &vec![1.0; self.discretization().len()]);
        let value = self.discretization().inner(&l1, self.filter(t - 1));
        if value > 0.0 {
            Ok(value)
        } else {
            Err(Error::NonPositiveKappa { t, value })
        }
    }

    pub fn gamma(&self, t: usize) -> Result<Gamma> {
        self.check_time(t, 1)?;
        let l1 = self.apply_l(t, &vec![1.0; self.discretization().len()]);
        let (arg, value) =
            l1.iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                });
        let n = l1.len();
        let unbounded = !self.discretization().is_finite()
            && n > 1
            && ((arg == 0 && l1[0] > l1[1]) || (arg == n - 1 && l1[n - 1] > l1[n - 2]));
        Ok(Gamma { value, unbounded })
    }

    /// `m_t(ψ) = ∫ ψ f_{t|t} dμ`.
    pub fn mean(&self, t: usize, psi: &[f64]) -> f64 {
        self.discretization().inner(psi, self.filter(t))
    }

    /// `σ_t²(ψ) = ∫ (ψ − m_t(ψ))² f_{t|t} dμ`.
    pub fn sigma_sq(&self, t: usize, psi: &[f64]) -> f64 {
        let m = self.mean(t, psi);
        let centred: Vec<f64> = psi.iter().map(|p| (p - m) * (p - m)).collect();
        self.discretization().inner(&centred, self.filter(t))
    }

    /// `L_t(ψ − m_t(ψ)) = L_tψ − m_t(ψ) L_t1`, a function at time `t - 1`.
    pub fn residual(&self, t: usize, psi: &[f64]) -> Vec<f64> {
        let m = self.mean(t, psi);
        let centred: Vec<f64> = psi.iter().map(|p| p - m).collect();
        self.apply_l(t, &centred)
    }

    /// `V_t(ψ) = σ_t²(ψ) + κ_t^{-2} V_{t-1}(L_tψ − m_t(ψ) L_t1)`, `V_0 = σ_0²`.
    pub fn variance(&self, t: usize, psi: &[f64]) -> Result<f64> {
        self.check_time(t, 0)?;
        let mut total = 0.0;
        let mut scale = 1.0;
        let mut phi = psi.to_vec();
        for s in (0..=t).rev() {
            let sigma = self.sigma_sq(s, &phi);
            if !sigma.is_finite() {
                return Err(Error::Divergent(format!("sigma^2 at t = {s} is {sigma}")));
            }
            total += scale * sigma;
            if s > 0 {
                let k = self.kappa(s)?;
                phi = self.residual(s, &phi);
                scale /= k * k;
            }
        }
        Ok(total)
    }

    /// `V_{r,t}(ψ_r, ψ_t)` for any `r, t`; diagonal blocks by polarization.
    pub fn covariance(&self, r: usize, t: usize, psi_r: &[f64], psi_t: &[f64]) -> Result<f64> {
        if r > t {
            return self.covariance(t, r, psi_t, psi_r);
        }
        self.check_time(t, 0)?;
        let mut phi = psi_t.to_vec();
        let mut scale = 1.0;
        for s in (r + 1..=t).rev() {
            scale /= self.kappa(s)?;
            phi = self.residual(s, &phi);
        }
        let sum: Vec<f64> = psi_r.iter().zip(&phi).map(|(a, b)| a + b).collect();
        let v =
            0.5 * (self.variance(r, &sum)? - self.variance(r, psi_r)? - self.variance(r, &phi)?);
        Ok(scale * v)
    }

    /// `V_T(ψ_0, .., ψ_T)` with `T = psis.len() - 1`.
    pub fn covariance_matrix(&self, psis: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        if psis.is_empty() {
            return Err(Error::Dimension("need at least one test function".into()));
        }
        let k = psis.len();
        let mut m = DMatrix::zeros(k, k);
        for s in 0..k {
            for t in s..k {
                let v = if s == t {
                    self.variance(t, &psis[t])?
                } else {
                    self.covariance(s, t, &psis[s], &psis[t])?
                };
                m[(s, t)] = v;
                m[(t, s)] = v;
            }
        }
        Ok(m)
    }

    /// Both sides of the split identity for `V_T`:
    /// `⟨λ̃, V_{T-1}(ψ_{0:T-2}, ρ) λ̃⟩` and `⟨λ, V_T λ⟩ − λ_T² σ_T²(ψ_T)`
    /// with `ρ = λ_{T-1} ψ_{T-1} + (λ_T / κ_T) L_T(ψ_T − m_T(ψ_T))`.
    pub fn covariance_split_check(&self, psis: &[Vec<f64>], lambda: &[f64]) -> Result<(f64, f64)> {
        let k = psis.len();
        if k < 2 || lambda.len() != k {
            return Err(Error::Dimension(format!(
                "need T >= 1 and one lambda per test function, got {} and {}",
                k,
                lambda.len()
            )));
        }
        let big_t = k - 1;
        let kappa = self.kappa(big_t)?;
        let r = self.residual(big_t, &psis[big_t]);
        let rho: Vec<f64> = psis[big_t - 1]
            .iter()
            .zip(&r)
            .map(|(p, r)| lambda[big_t - 1] * p + lambda[big_t] / kappa * r)
            .collect();
        let mut reduced: Vec<Vec<f64>> = psis[..big_t - 1].to_vec();
        reduced.push(rho);
        let mut tilde: Vec<f64> = lambda[..big_t - 1].to_vec();
        tilde.push(1.0);
        let lhs = quadratic_form(&self.covariance_matrix(&reduced)?, &tilde);
        let rhs = quadratic_form(&self.covariance_matrix(psis)?, lambda)
            - lambda[big_t] * lambda[big_t] * self.sigma_sq(big_t, &psis[big_t]);
        Ok((lhs, rhs))
    }

    /// Per-time ledger for a single test function used at every `t`.
    pub fn ledger(&self, psi: &[f64]) -> Result<VarianceLedger> {
        let horizon = self.horizon();
        let mut entries = Vec::with_capacity(horizon + 1);
        let mut kappas = Vec::new();
        let mut gammas = Vec::new();
        for t in 0..=horizon {
            let (kappa, gamma) = if t == 0 {
                (None, None)
            } else {
                let k = self.kappa(t)?;
                let g = self.gamma(t)?;
                kappas.push(k);
                gammas.push(g.effective());
                (Some(k), Some(g))
            };
            let (filter_mean, filter_variance) = self.run.filter(t).moments();
            entries.push(LedgerEntry {
                t,
                kappa,
                gamma: gamma.map(|g| g.value),
                gamma_unbounded: gamma.is_some_and(|g| g.unbounded),
                m: self.mean(t, psi),
                sigma_sq: self.sigma_sq(t, psi),
                v: self.variance(t, psi)?,
                filter_mean,
                filter_variance,
            });
        }
        let matrix = self.covariance_matrix(&vec![psi.to_vec(); horizon + 1])?;
        Ok(VarianceLedger {
            model: self.name.clone(),
            horizon,
            entries,
            matrix: (0..matrix.nrows())
                .map(|i| matrix.row(i).iter().copied().collect())
                .collect(),
            concentration: concentration_constants(&gammas, &kappas),
            filters: self.run.filters.clone(),
        })
    }

    fn check_time(&self, t: usize, min: usize) -> Result<()> {
        if t < min || t > self.horizon() {
            return Err(Error::Dimension(format!(
                "time index {t} outside {min}..={}",
                self.horizon()
            )));
        }
        Ok(())
    }
}

pub fn quadratic_form(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            acc += x[i] * m[(i, j)] * x[j];
        }
    }
    acc
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub t: usize,
    pub kappa: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_unbounded: bool,
    pub m: f64,
    pub sigma_sq: f64,
    pub v: f64,
    pub filter_mean: f64,
    pub filter_variance: f64,
}

/// Theory values for one model, observation record and test function.
#[derive(Clone, Debug, Serialize)]
pub struct VarianceLedger {
    pub model: String,
    pub horizon: usize,
    pub entries: Vec<LedgerEntry>,
    /// `V_T(ψ, .., ψ)`.
    pub matrix: Vec<Vec<f64>>,
    pub concentration: Vec<ConcentrationRow>,
    #[serde(skip)]
    pub filters: Vec<FilterDensity>,
}

impl VarianceLedger {
    pub fn entry(&self, t: usize) -> &LedgerEntry {
        &self.entries[t]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `L_tψ` at the nodes, for callers that do not keep a context.
#[allow(non_snake_case)]
pub fn apply_L<M: ExactModel>(
    model: &M,
    obs: &ObservationSequence,
    t: usize,
    psi: impl Fn(M::State) -> f64,
) -> Vec<f64> {
    let system = ExactSystem::new(model, &obs.prefix(t));
    let n = system.discretization().len();
    let a = system.transition(t);
    let psi = system.discretization().eval(psi);
    let g: Vec<f64> = system
        .discretization()
        .weights()
        .iter()
        .zip(system.emission(t))
        .zip(&psi)
        .map(|((w, b), p)| w * b * p)
        .collect();
    (0..n)
        .map(|i| {
            a[i * n..(i + 1) * n]
                .iter()
                .zip(&g)
                .map(|(a, g)| a * g)
                .sum()
        })
        .collect()
}

/// `V_T(ψ)` for `T = obs.horizon()` with the full per-time ledger.
pub fn variance_recursion<M: ExactModel>(
    model: &M,
    obs: &ObservationSequence,
    psi: impl Fn(M::State) -> f64,
) -> Result<(f64, VarianceLedger)> {
    let ctx = TheoryContext::new(model, obs)?;
    let ledger = ctx.ledger(&ctx.eval(psi))?;
    Ok((ledger.entries[ctx.horizon()].v, ledger))
}
