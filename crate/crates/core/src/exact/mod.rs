//! Exact filter recursions on a finite node set.
//!
//! Every model exposes a [`Discretization`]: the states themselves with
//! counting measure for finite models, or a trapezoid grid for models on the
//! real line. On the grid the transition density is renormalised row by row
//! against the quadrature weights, so the discretised chain is exactly
//! stochastic and every update normaliser equals the corresponding `κ_t`.

mod brute;
mod kalman;

pub use brute::{brute_force_filter, brute_force_posterior, BRUTE_FORCE_BUDGET};
pub use kalman::{kalman_filter, LinearGaussian};

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ExactModel, ObservationSequence};

#[derive(Clone, Debug, PartialEq)]
pub enum DiscretizationKind {
    Counting,
    Trapezoid { lower: f64, upper: f64 },
}

/// Nodes of the state space with their reference-measure weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Discretization<S> {
    nodes: Vec<S>,
    weights: Vec<f64>,
    kind: DiscretizationKind,
}

impl Discretization<usize> {
    pub fn finite(size: usize) -> Self {
        Discretization {
            nodes: (0..size).collect(),
            weights: vec![1.0; size],
            kind: DiscretizationKind::Counting,
        }
    }
}

impl Discretization<f64> {
    pub fn grid(lower: f64, upper: f64, nodes: usize) -> Self {
        let h = (upper - lower) / (nodes - 1) as f64;
        let xs = (0..nodes).map(|i| lower + i as f64 * h).collect();
        let mut weights = vec![h; nodes];
        weights[0] = 0.5 * h;
        weights[nodes - 1] = 0.5 * h;
        Discretization {
            nodes: xs,
            weights,
            kind: DiscretizationKind::Trapezoid { lower, upper },
        }
    }
}

impl<S: Copy> Discretization<S> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[S] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kind(&self) -> &DiscretizationKind {
        &self.kind
    }

    pub fn is_finite(&self) -> bool {
        self.kind == DiscretizationKind::Counting
    }

    /// Evaluate a function at every node.
    pub fn eval(&self, f: impl Fn(S) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    /// `∫ v dμ` for a vector of node values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// `∫ u v dμ`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(u.iter().zip(v))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    /// `f_{t|t}`
    Filter,
    /// `f_{t|t-1}`
    Predictor,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Representation {
    Finite {
        probabilities: Vec<f64>,
    },
    Gaussian {
        mean: f64,
        variance: f64,
    },
    Grid {
        nodes: Vec<f64>,
        weights: Vec<f64>,
        values: Vec<f64>,
    },
}

/// An exact filter or one-step predictor density at a given time.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterDensity {
    pub representation: Representation,
    pub time_index: usize,
    pub kind: DensityKind,
}

impl FilterDensity {
    /// Density values aligned with the discretisation nodes.
    pub fn values(&self) -> Option<&[f64]> {
        match &self.representation {
            Representation::Finite { probabilities } => Some(probabilities),
            Representation::Grid { values, .. } => Some(values),
            Representation::Gaussian { .. } => None,
        }
    }

    pub fn mass(&self) -> f64 {
        match &self.representation {
            Representation::Finite { probabilities } => probabilities.iter().sum(),
            Representation::Gaussian { .. } => 1.0,
            Representation::Grid {
                weights, values, ..
            } => weights.iter().zip(values).map(|(w, v)| w * v).sum(),
        }
    }

    /// Mean and variance of the real coordinate of the state.
    pub fn moments(&self) -> (f64, f64) {
        let (xs, ws): (Vec<f64>, Vec<f64>) = match &self.representation {
            Representation::Gaussian { mean, variance } => return (*mean, *variance),
            Representation::Finite { probabilities } => (
                (0..probabilities.len()).map(|i| i as f64).collect(),
                probabilities.clone(),
            ),
            Representation::Grid {
                nodes,
                weights,
                values,
            } => (
                nodes.clone(),
                weights.iter().zip(values).map(|(w, v)| w * v).collect(),
            ),
        };
        let mean: f64 = xs.iter().zip(&ws).map(|(x, w)| x * w).sum();
        let var: f64 = xs
            .iter()
            .zip(&ws)
            .map(|(x, w)| w * (x - mean).powi(2))
            .sum();
        (mean, var)
    }

    fn with_values(&self, values: Vec<f64>, time_index: usize, kind: DensityKind) -> FilterDensity {
        let representation = match &self.representation {
            Representation::Finite { .. } => Representation::Finite {
                probabilities: values,
            },
            Representation::Grid { nodes, weights, .. } => Representation::Grid {
                nodes: nodes.clone(),
                weights: weights.clone(),
                values,
            },
            Representation::Gaussian { .. } => {
                unreachable!("gaussian densities carry no node values")
            }
        };
        FilterDensity {
            representation,
            time_index,
            kind,
        }
    }
}

/// Discretised kernels of a model along an observation record.
///
/// `transition(t)[i * n + j]` is `a_t(x_i, x_j)` (density with respect to the
/// node weights) and `emission(t)[j]` is `b_t(x_j, y_t)`.
#[derive(Clone, Debug)]
pub struct ExactSystem<S> {
    disc: Discretization<S>,
    initial: Vec<f64>,
    transitions: Vec<Arc<Vec<f64>>>,
    emissions: Vec<Vec<f64>>,
}

impl<S: Copy + Send + Sync> ExactSystem<S> {
    pub fn new<M>(model: &M, obs: &ObservationSequence) -> Self
    where
        M: ExactModel<State = S>,
    {
        let disc = model.discretization();
        let n = disc.len();
        let normalize = !disc.is_finite();
        let mut initial = disc.eval(|x| model.log_initial_density(x).exp());
        if normalize {
            let mass = disc.integrate(&initial);
            initial.iter_mut().for_each(|v| *v /= mass);
        }
        let mut transitions: Vec<Arc<Vec<f64>>> = Vec::with_capacity(obs.horizon());
        for t in 1..=obs.horizon() {
            if t > 1 && model.is_time_homogeneous() {
                let first = transitions[0].clone();
                transitions.push(first);
                continue;
            }
            let mut a = vec![0.0; n * n];
            for (i, &x) in disc.nodes().iter().enumerate() {
                let row = &mut a[i * n..(i + 1) * n];
                for (j, &u) in disc.nodes().iter().enumerate() {
                    row[j] = model.log_transition_density(t, x, u).exp();
                }
                if normalize {
                    let mass = disc.integrate(row);
                    if mass > 0.0 {
                        row.iter_mut().for_each(|v| *v /= mass);
                    }
                }
            }
            transitions.push(Arc::new(a));
        }
        let emissions = (1..=obs.horizon())
            .map(|t| {
                let y = obs.get(t);
                disc.eval(|u| model.log_emission_density(t, u, y).exp())
            })
            .collect();
        ExactSystem {
            disc,
            initial,
            transitions,
            emissions,
        }
    }

    pub fn discretization(&self) -> &Discretization<S> {
        &self.disc
    }

    pub fn horizon(&self) -> usize {
        self.emissions.len()
    }

    /// `a_0` at the nodes, normalised against the node weights.
    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self, t: usize) -> &[f64] {
        &self.transitions[t - 1]
    }

    pub fn emission(&self, t: usize) -> &[f64] {
        &self.emissions[t - 1]
    }

    pub fn initial_density(&self) -> FilterDensity {
        self.density(self.initial.clone(), 0, DensityKind::Filter)
    }

    fn density(&self, values: Vec<f64>, time_index: usize, kind: DensityKind) -> FilterDensity {
        let representation = match self.disc.kind() {
            DiscretizationKind::Counting => Representation::Finite {
                probabilities: values,
            },
            DiscretizationKind::Trapezoid { .. } => Representation::Grid {
                nodes: self
                    .disc
                    .nodes()
                    .iter()
                    .enumerate()
                    .map(|(i, _)| self.node_coordinate(i))
                    .collect(),
                weights: self.disc.weights().to_vec(),
                values,
            },
        };
        FilterDensity {
            representation,
            time_index,
            kind,
        }
    }

    fn node_coordinate(&self, i: usize) -> f64 {
        match self.disc.kind() {
            DiscretizationKind::Counting => i as f64,
            DiscretizationKind::Trapezoid { lower, upper } => {
                lower + (upper - lower) * i as f64 / (self.disc.len() - 1) as f64
            }
        }
    }

    /// `f_{t|t-1}(x') = ∫ f_{t-1|t-1}(x) a_t(x, x') dμ(x)`.
    pub fn predict(&self, t: usize, filter: &FilterDensity) -> Result<FilterDensity> {
        let f = self.check(filter, t - 1, DensityKind::Filter)?;
        let n = self.disc.len();
        let a = self.transition(t);
        let mut pred = vec![0.0; n];
        for (i, (&fi, &wi)) in f.iter().zip(self.disc.weights()).enumerate() {
            let c = fi * wi;
            if c == 0.0 {
                continue;
            }
            for (p, &aij) in pred.iter_mut().zip(&a[i * n..(i + 1) * n]) {
                *p += c * aij;
            }
        }
        Ok(filter.with_values(pred, t, DensityKind::Predictor))
    }

    /// Bayes update by `b_t(·, y_t)`; returns the filter and its normaliser.
    pub fn update(&self, t: usize, predictor: &FilterDensity) -> Result<(FilterDensity, f64)> {
        let p = self.check(predictor, t, DensityKind::Predictor)?;
        let b = self.emission(t);
        let mut post: Vec<f64> = p.iter().zip(b).map(|(p, b)| p * b).collect();
        let normalizer = self.disc.integrate(&post);
        if !(normalizer > 0.0) {
            return Err(Error::ZeroLikelihood { t });
        }
        post.iter_mut().for_each(|v| *v /= normalizer);
        if !self.disc.is_finite() {
            let mass = self.disc.integrate(&post);
            post.iter_mut().for_each(|v| *v /= mass);
        }
        Ok((
            predictor.with_values(post, t, DensityKind::Filter),
            normalizer,
        ))
    }

    fn check<'a>(&self, d: &'a FilterDensity, t: usize, kind: DensityKind) -> Result<&'a [f64]> {
        let values = d
            .values()
            .ok_or_else(|| Error::Unsupported("gaussian density on a node backend".into()))?;
        if values.len() != self.disc.len() {
            return Err(Error::Dimension(format!(
                "density has {} values, backend has {} nodes",
                values.len(),
                self.disc.len()
            )));
        }
        if d.kind != kind || d.time_index != t {
            return Err(Error::InvalidParameter(format!(
                "expected {kind:?} at t = {t}, got {:?} at t = {}",
                d.kind, d.time_index
            )));
        }
        Ok(values)
    }

    /// Alternate prediction and update from `f_{0|0} = a_0`.
    pub fn run(&self) -> Result<ExactFilterRun> {
        let mut filters = vec![self.initial_density()];
        let mut predictors = Vec::with_capacity(self.horizon());
        let mut normalizers = Vec::with_capacity(self.horizon());
        for t in 1..=self.horizon() {
            let pred = self.predict(t, &filters[t - 1])?;
            let (filt, norm) = self.update(t, &pred)?;
            predictors.push(pred);
            filters.push(filt);
            normalizers.push(norm);
        }
        Ok(ExactFilterRun {
            filters,
            predictors,
            normalizers,
        })
    }
}

/// Output of [`run_exact_filter`].
#[derive(Clone, Debug)]
pub struct ExactFilterRun {
    /// `f_{0|0} = a_0, f_{1|1}, .., f_{T|T}`.
    pub filters: Vec<FilterDensity>,
    /// `f_{1|0}, .., f_{T|T-1}`.
    pub predictors: Vec<FilterDensity>,
    /// `κ_1, .., κ_T`.
    pub normalizers: Vec<f64>,
}

impl ExactFilterRun {
    pub fn filter(&self, t: usize) -> &FilterDensity {
        &self.filters[t]
    }

    pub fn kappa(&self, t: usize) -> f64 {
        self.normalizers[t - 1]
    }

    /// `∏ κ_t`, the marginal likelihood of the observations.
    pub fn marginal_likelihood(&self) -> f64 {
        self.normalizers.iter().product()
    }

    /// CSV with columns `t, state_or_node, density`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "state_or_node", "density"])?;
        for f in &self.filters {
            let (xs, vs): (Vec<f64>, Vec<f64>) = match &f.representation {
                Representation::Finite { probabilities } => (
                    (0..probabilities.len()).map(|i| i as f64).collect(),
                    probabilities.clone(),
                ),
                Representation::Grid { nodes, values, .. } => (nodes.clone(), values.clone()),
                Representation::Gaussian { mean, variance } => (vec![*mean], vec![*variance]),
            };
            for (x, v) in xs.iter().zip(&vs) {
                w.write_record([f.time_index.to_string(), format!("{x}"), format!("{v:e}")])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// One prediction step from the filter at `t - 1`.
pub fn prediction_step<M: ExactModel>(
    model: &M,
    obs: &ObservationSequence,
    t: usize,
    filter: &FilterDensity,
) -> Result<FilterDensity> {
    ExactSystem::new(model, &obs.prefix(t)).predict(t, filter)
}

/// One update step on the predictor at `t`; returns the filter and normaliser.
pub fn update_step<M: ExactModel>(
    model: &M,
    obs: &ObservationSequence,
    t: usize,
    predictor: &FilterDensity,
) -> Result<(FilterDensity, f64)> {
    ExactSystem::new(model, &obs.prefix(t)).update(t, predictor)
}

pub fn run_exact_filter<M: ExactModel>(
    model: &M,
    obs: &ObservationSequence,
) -> Result<ExactFilterRun> {
    ExactSystem::new(model, obs).run()
}
