use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{log_sum_exp, StateSpaceModel, StepKernel, Support};
use crate::error::{Error, Result};
use crate::exact::Discretization;
use crate::stream::Stream;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// Half-width of the transition window, in state-noise standard deviations.
const WINDOW_SDS: f64 = 10.0;
const REJECTION_TRIES: usize = 4096;

/// A scalar map `(t, x) -> f(t, x)` used for drifts and observation functions.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarMap {
    Identity,
    Linear {
        slope: f64,
        #[serde(default)]
        intercept: f64,
    },
    /// `amplitude * sin(frequency * x)`; bounded.
    Sine {
        amplitude: f64,
        frequency: f64,
    },
    /// `scale * tanh(x)`; bounded.
    Tanh {
        scale: f64,
    },
    #[serde(skip)]
    Custom(Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>),
}

impl ScalarMap {
    pub fn custom(f: impl Fn(usize, f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarMap::Custom(Arc::new(f))
    }

    pub fn eval(&self, t: usize, x: f64) -> f64 {
        match self {
            ScalarMap::Identity => x,
            ScalarMap::Linear { slope, intercept } => slope * x + intercept,
            ScalarMap::Sine {
                amplitude,
                frequency,
            } => amplitude * (frequency * x).sin(),
            ScalarMap::Tanh { scale } => scale * x.tanh(),
            ScalarMap::Custom(f) => f(t, x),
        }
    }
}

impl fmt::Debug for ScalarMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarMap::Identity => write!(f, "Identity"),
            ScalarMap::Linear { slope, intercept } => write!(f, "Linear({slope} x + {intercept})"),
            ScalarMap::Sine {
                amplitude,
                frequency,
            } => write!(f, "Sine({amplitude} sin({frequency} x))"),
            ScalarMap::Tanh { scale } => write!(f, "Tanh({scale} tanh x)"),
            ScalarMap::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Bounded, everywhere-positive observation noise densities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    Gaussian { variance: f64 },
    Cauchy { scale: f64 },
}

impl Noise {
    pub fn log_pdf(&self, v: f64) -> f64 {
        match *self {
            Noise::Gaussian { variance } => {
                -LN_SQRT_2PI - 0.5 * variance.ln() - v * v / (2.0 * variance)
            }
            Noise::Cauchy { scale } => -(PI * scale).ln() - (1.0 + (v / scale).powi(2)).ln(),
        }
    }

    pub fn sup(&self) -> f64 {
        self.log_pdf(0.0).exp()
    }

    pub fn sample(&self, rng: &mut Stream) -> f64 {
        match *self {
            Noise::Gaussian { variance } => variance.sqrt() * rng.sample::<f64, _>(StandardNormal),
            Noise::Cauchy { scale } => {
                let u: f64 = rng.random();
                scale * (PI * (u - 0.5)).tan()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Noise::Gaussian { variance } => variance > 0.0 && variance.is_finite(),
            Noise::Cauchy { scale } => scale > 0.0 && scale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "noise parameters must be positive: {self:?}"
            )))
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Emission {
    /// `y = g_t(x) + η`, `b_t(x, y) = noise(y - g_t(x))`.
    Additive {
        observation: ScalarMap,
        noise: Noise,
    },
    /// `y = exp(x) η` with standard normal `η`.
    StochasticVolatility,
}

impl Emission {
    pub fn log_density(&self, t: usize, x: f64, y: f64) -> f64 {
        match self {
            Emission::Additive { observation, noise } => noise.log_pdf(y - observation.eval(t, x)),
            Emission::StochasticVolatility => {
                // y² e^{-2x} formed in log space so large |x| or |y| cannot produce inf * 0
                let quad = if y == 0.0 {
                    0.0
                } else {
                    (2.0 * y.abs().ln() - 2.0 * x).exp()
                };
                -LN_SQRT_2PI - x - 0.5 * quad
            }
        }
    }

    pub fn sample(&self, t: usize, x: f64, rng: &mut Stream) -> f64 {
        match self {
            Emission::Additive { observation, noise } => observation.eval(t, x) + noise.sample(rng),
            Emission::StochasticVolatility => x.exp() * rng.sample::<f64, _>(StandardNormal),
        }
    }

    /// Upper bound of `b_t(·, y)` over `[lo, hi]`.
    pub fn sup_on(&self, t: usize, y: f64, lo: f64, hi: f64) -> f64 {
        match self {
            Emission::Additive { noise, .. } => noise.sup(),
            Emission::StochasticVolatility => {
                // unimodal in x with mode ln|y|; decreasing everywhere when y = 0
                let mode = if y == 0.0 {
                    lo
                } else {
                    y.abs().ln().clamp(lo, hi)
                };
                self.log_density(t, mode, y).exp()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianPrior {
    pub fn standard() -> Self {
        GaussianPrior {
            mean: 0.0,
            variance: 1.0,
        }
    }
}

/// Trapezoid grid used for quadrature of the continuous kernels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    pub nodes: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lower: -12.0,
            upper: 12.0,
            nodes: 2001,
        }
    }
}

impl GridSpec {
    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.nodes - 1) as f64
    }
}

/// One-dimensional model `x_t = f_t(x_{t-1}) + ε_t`, `ε_t ~ N(0, q)`, with an
/// additive-noise or stochastic-volatility emission.
#[derive(Clone, Debug)]
pub struct ContinuousModel {
    name: String,
    initial: GaussianPrior,
    drift: ScalarMap,
    state_noise_variance: f64,
    emission: Emission,
    grid: GridSpec,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

impl ContinuousModel {
    pub fn new(
        name: impl Into<String>,
        initial: GaussianPrior,
        drift: ScalarMap,
        state_noise_variance: f64,
        emission: Emission,
        grid: GridSpec,
    ) -> Result<Self> {
        if !(initial.variance > 0.0 && initial.variance.is_finite() && initial.mean.is_finite()) {
            return Err(Error::InvalidParameter(
                "initial variance must be positive".into(),
            ));
        }
        if !(state_noise_variance > 0.0 && state_noise_variance.is_finite()) {
            return Err(Error::InvalidParameter(
                "state noise variance must be positive".into(),
            ));
        }
        if let Emission::Additive { noise, .. } = &emission {
            noise.validate()?;
        }
        if grid.nodes < 3 || !(grid.upper > grid.lower) {
            return Err(Error::InvalidParameter(format!("degenerate grid {grid:?}")));
        }
        // the trapezoid rule must resolve the state noise and the prior
        let resolution = state_noise_variance.min(initial.variance).sqrt() / 4.0;
        if grid.spacing() > resolution {
            return Err(Error::InvalidParameter(format!(
                "grid spacing {} does not resolve noise scale {}",
                grid.spacing(),
                4.0 * resolution
            )));
        }
        let disc = Discretization::<f64>::grid(grid.lower, grid.upper, grid.nodes);
        let nodes = disc.nodes().to_vec();
        let weights = disc.weights().to_vec();
        let log_weights = disc.weights().iter().map(|w| w.ln()).collect();
        Ok(ContinuousModel {
            name: name.into(),
            initial,
            drift,
            state_noise_variance,
            emission,
            grid,
            nodes,
            weights,
            log_weights,
        })
    }

    /// Nonlinear drift with additive observation noise; unit state noise and a standard normal prior.
    pub fn nonlinear_additive(
        drift: ScalarMap,
        observation: ScalarMap,
        noise: Noise,
    ) -> Result<Self> {
        Self::new(
            "nonlinear_additive",
            GaussianPrior::standard(),
            drift,
            1.0,
            Emission::Additive { observation, noise },
            GridSpec::default(),
        )
    }

    /// `x_t = f_t(x_{t-1}) + ε_t`, `y_t = exp(x_t) η_t`.
    pub fn stochastic_volatility(drift: ScalarMap, state_noise_variance: f64) -> Result<Self> {
        Self::new(
            "stoch_vol",
            GaussianPrior::standard(),
            drift,
            state_noise_variance,
            Emission::StochasticVolatility,
            GridSpec::default(),
        )
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_initial(self, initial: GaussianPrior) -> Result<Self> {
        Self::new(
            self.name,
            initial,
            self.drift,
            self.state_noise_variance,
            self.emission,
            self.grid,
        )
    }

    pub fn with_state_noise(self, variance: f64) -> Result<Self> {
        Self::new(
            self.name,
            self.initial,
            self.drift,
            variance,
            self.emission,
            self.grid,
        )
    }

    pub fn with_grid(self, grid: GridSpec) -> Result<Self> {
        Self::new(
            self.name,
            self.initial,
            self.drift,
            self.state_noise_variance,
            self.emission,
            grid,
        )
    }

    pub fn initial(&self) -> GaussianPrior {
        self.initial
    }

    pub fn drift(&self) -> &ScalarMap {
        &self.drift
    }

    pub fn state_noise_variance(&self) -> f64 {
        self.state_noise_variance
    }

    pub fn emission(&self) -> &Emission {
        &self.emission
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    fn log_gaussian(x: f64, mean: f64, variance: f64) -> f64 {
        let d = x - mean;
        -LN_SQRT_2PI - 0.5 * variance.ln() - d * d / (2.0 * variance)
    }

    /// Grid indices covering `[centre - W, centre + W]`.
    fn window(&self, centre: f64) -> std::ops::Range<usize> {
        let half = WINDOW_SDS * self.state_noise_variance.sqrt();
        let h = self.grid.spacing();
        let lo = ((centre - half - self.grid.lower) / h).ceil().max(0.0) as usize;
        let hi = (((centre + half - self.grid.lower) / h).floor() + 1.0)
            .clamp(0.0, self.grid.nodes as f64) as usize;
        lo.min(hi)..hi
    }
}

/// Quadrature-backed selection and rejection-sampled mutation for one step.
pub struct ContinuousKernel<'a> {
    model: &'a ContinuousModel,
    t: usize,
    y: f64,
    log_emission: Vec<f64>,
    /// `exp(log_emission − log_emission_max)`.
    emission: Vec<f64>,
    log_emission_max: f64,
}

impl ContinuousKernel<'_> {
    /// Visit `(j, q_j exp(−(x_j − c)² / 2v))` over the window around `c = drift(x_prev)`.
    ///
    /// The nodes are equally spaced, so the Gaussian factor follows a two-term
    /// multiplicative recurrence and only three exponentials are needed per call.
    fn for_each_weight(&self, x_prev: f64, mut visit: impl FnMut(usize, f64)) {
        let m = self.model;
        let centre = m.drift.eval(self.t, x_prev);
        let range = m.window(centre);
        if range.is_empty() {
            return;
        }
        let (h, v) = (m.grid.spacing(), m.state_noise_variance);
        let d = m.nodes[range.start] - centre;
        let mut g = (-d * d / (2.0 * v)).exp();
        let mut ratio = (-(2.0 * d * h + h * h) / (2.0 * v)).exp();
        let step = (-h * h / v).exp();
        for j in range {
            visit(j, m.weights[j] * g);
            g *= ratio;
            ratio *= step;
        }
    }

    fn log_terms(&self, x_prev: f64) -> (std::ops::Range<usize>, Vec<f64>) {
        let m = self.model;
        let centre = m.drift.eval(self.t, x_prev);
        let range = m.window(centre);
        let terms = range
            .clone()
            .map(|j| {
                m.log_weights[j]
                    + ContinuousModel::log_gaussian(m.nodes[j], centre, m.state_noise_variance)
            })
            .collect();
        (range, terms)
    }

    /// Log-space selection weight, for windows where the scaled emission underflows.
    fn log_selection_weight_slow(&self, x_prev: f64) -> f64 {
        let (range, terms) = self.log_terms(x_prev);
        let norm = log_sum_exp(terms.iter().copied());
        let num = log_sum_exp(range.zip(&terms).map(|(j, a)| a + self.log_emission[j]));
        num - norm
    }

    fn grid_sample(&self, x_prev: f64, rng: &mut Stream) -> f64 {
        let (range, terms) = self.log_terms(x_prev);
        let logs: Vec<f64> = range
            .clone()
            .zip(&terms)
            .map(|(j, a)| a + self.log_emission[j])
            .collect();
        let total = log_sum_exp(logs.iter().copied());
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, l) in range.clone().zip(&logs) {
            acc += (l - total).exp();
            if u < acc {
                return self.model.nodes[j];
            }
        }
        self.model.nodes[range.end.saturating_sub(1)]
    }
}

impl StepKernel<f64> for ContinuousKernel<'_> {
    fn log_selection_weight(&self, x_prev: f64) -> f64 {
        if self.log_emission_max == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let (mut norm, mut num) = (0.0, 0.0);
        self.for_each_weight(x_prev, |j, w| {
            norm += w;
            num += w * self.emission[j];
        });
        if num > 0.0 && norm > 0.0 {
            num.ln() - norm.ln() + self.log_emission_max
        } else {
            self.log_selection_weight_slow(x_prev)
        }
    }

    fn sample_mutation(&self, x_prev: f64, rng: &mut Stream) -> f64 {
        let m = self.model;
        let centre = m.drift.eval(self.t, x_prev);
        let sd = m.state_noise_variance.sqrt();
        let half = WINDOW_SDS * sd;
        let bound = m
            .emission
            .sup_on(self.t, self.y, centre - half, centre + half);
        if bound.is_finite() && bound > 0.0 {
            for _ in 0..REJECTION_TRIES {
                let u = centre + sd * rng.sample::<f64, _>(StandardNormal);
                let b = m.emission.log_density(self.t, u, self.y).exp();
                let v: f64 = rng.random();
                if v * bound < b {
                    return u;
                }
            }
        }
        // acceptance too small: inverse CDF on the grid window
        self.grid_sample(x_prev, rng)
    }

    fn apply(&self, x_prev: f64, psi: &dyn Fn(f64) -> f64) -> f64 {
        if self.log_emission_max == f64::NEG_INFINITY {
            return 0.0;
        }
        let (mut norm, mut acc) = (0.0, 0.0);
        self.for_each_weight(x_prev, |j, w| {
            norm += w;
            let b = self.emission[j];
            if b > 0.0 {
                acc += w * b * psi(self.model.nodes[j]);
            }
        });
        if norm > 0.0 {
            acc / norm * self.log_emission_max.exp()
        } else {
            0.0
        }
    }
}

impl StateSpaceModel for ContinuousModel {
    type State = f64;
    type Kernel<'a> = ContinuousKernel<'a>;

    fn name(&self) -> &str {
        &self.name
    }

    fn support(&self) -> Support {
        Support::RealLine
    }

    fn log_initial_density(&self, x: f64) -> f64 {
        Self::log_gaussian(x, self.initial.mean, self.initial.variance)
    }

    fn log_transition_density(&self, t: usize, x: f64, x_next: f64) -> f64 {
        Self::log_gaussian(x_next, self.drift.eval(t, x), self.state_noise_variance)
    }

    fn log_emission_density(&self, t: usize, x: f64, y: f64) -> f64 {
        self.emission.log_density(t, x, y)
    }

    fn sample_initial(&self, rng: &mut Stream) -> f64 {
        self.initial.mean + self.initial.variance.sqrt() * rng.sample::<f64, _>(StandardNormal)
    }

    fn sample_transition(&self, t: usize, x: f64, rng: &mut Stream) -> f64 {
        self.drift.eval(t, x)
            + self.state_noise_variance.sqrt() * rng.sample::<f64, _>(StandardNormal)
    }

    fn sample_observation(&self, t: usize, x: f64, rng: &mut Stream) -> f64 {
        self.emission.sample(t, x, rng)
    }

    fn step_kernel(&self, t: usize, y: f64) -> Result<ContinuousKernel<'_>> {
        if !y.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "observation at t = {t} is not finite"
            )));
        }
        let log_emission: Vec<f64> = self
            .nodes
            .iter()
            .map(|&u| self.emission.log_density(t, u, y))
            .collect();
        let log_emission_max = log_emission
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let emission = log_emission
            .iter()
            .map(|l| (l - log_emission_max).exp())
            .collect();
        Ok(ContinuousKernel {
            model: self,
            t,
            y,
            log_emission,
            emission,
            log_emission_max,
        })
    }

    fn coordinate(x: f64) -> f64 {
        x
    }
}

impl super::ExactModel for ContinuousModel {
    fn discretization(&self) -> Discretization<f64> {
        Discretization::grid(self.grid.lower, self.grid.upper, self.grid.nodes)
    }

    fn is_time_homogeneous(&self) -> bool {
        !matches!(self.drift, ScalarMap::Custom(_))
    }
}
