//! State space models: the Markov chain `a_0, a_t`, the emission kernel `b_t`
//! and the samplers the particle filter needs.
//!
//! Kernels are time-indexed throughout. Time `t` runs over `1..=T`; the
//! transition used to move from `x_{t-1}` to `x_t` is `a_t` and the emission
//! of `y_t` is `b_t(x_t, ·)`. Densities are evaluated in log space.

mod continuous;
mod finite;
pub(crate) mod spec;

pub use continuous::{ContinuousModel, Emission, GaussianPrior, GridSpec, Noise, ScalarMap};
pub use finite::FiniteHmm;
pub use spec::{builtin_names, ModelSpec};

use std::fmt::Debug;
use std::path::Path;

use crate::error::{Error, Result};
use crate::exact::Discretization;
use crate::stream::Stream;

/// Reference measure on the state space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Support {
    /// `{0, .., size - 1}` with counting measure.
    Finite { size: usize },
    /// The real line with Lebesgue measure.
    RealLine,
}

/// Selection and mutation machinery for one filter step, prepared once per `(t, y_t)`.
pub trait StepKernel<S> {
    /// `log b̂_t(x_prev) = log ∫ b_t(x, y_t) a_t(x_prev, x) dμ(x)`.
    fn log_selection_weight(&self, x_prev: S) -> f64;

    /// Draw from `â_t(x_prev, ·) dμ`, the emission-tilted transition.
    fn sample_mutation(&self, x_prev: S, rng: &mut Stream) -> S;

    /// `L_t ψ(x_prev) = ∫ a_t(x_prev, u) b_t(u, y_t) ψ(u) dμ(u)`.
    fn apply(&self, x_prev: S, psi: &dyn Fn(S) -> f64) -> f64;
}

pub trait StateSpaceModel: Send + Sync {
    type State: Copy + Send + Sync + Debug + PartialEq + 'static;
    type Kernel<'a>: StepKernel<Self::State> + Send + Sync
    where
        Self: 'a;

    fn name(&self) -> &str;
    fn support(&self) -> Support;

    fn log_initial_density(&self, x: Self::State) -> f64;
    fn log_transition_density(&self, t: usize, x: Self::State, x_next: Self::State) -> f64;
    fn log_emission_density(&self, t: usize, x: Self::State, y: f64) -> f64;

    fn sample_initial(&self, rng: &mut Stream) -> Self::State;
    fn sample_transition(&self, t: usize, x: Self::State, rng: &mut Stream) -> Self::State;
    fn sample_observation(&self, t: usize, x: Self::State, rng: &mut Stream) -> f64;

    fn step_kernel(&self, t: usize, y: f64) -> Result<Self::Kernel<'_>>;

    /// Real-valued coordinate of a state, used by test functions and exports.
    fn coordinate(x: Self::State) -> f64;
}

/// Models whose filter can be computed exactly on a finite set of nodes.
pub trait ExactModel: StateSpaceModel {
    fn discretization(&self) -> Discretization<Self::State>;

    /// Whether `a_t` is the same kernel for every `t`; lets exact backends share one matrix.
    fn is_time_homogeneous(&self) -> bool {
        false
    }
}

/// The quenched observation record `y_1, .., y_T`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSequence {
    values: Vec<f64>,
}

impl ObservationSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "observation y_{} = {v} is not finite",
                i + 1
            )));
        }
        Ok(ObservationSequence { values })
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    /// `y_t` for `t` in `1..=T`.
    pub fn get(&self, t: usize) -> f64 {
        assert!(
            t >= 1 && t <= self.values.len(),
            "observation index {t} out of range"
        );
        self.values[t - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The first `horizon` observations.
    pub fn prefix(&self, horizon: usize) -> ObservationSequence {
        ObservationSequence {
            values: self.values[..horizon.min(self.values.len())].to_vec(),
        }
    }

    /// Single-column CSV with header `y`.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 1 || &headers[0] != "y" {
            return Err(Error::InvalidParameter(format!(
                "observation CSV must have the single header `y`, found {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut values = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            let v: f64 = record[0].parse().map_err(|_| {
                Error::InvalidParameter(format!("row {}: cannot parse `{}`", row + 1, &record[0]))
            })?;
            values.push(v);
        }
        Self::new(values)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["y"])?;
        for v in &self.values {
            w.write_record([format!("{v}")])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Draw a state path `x_0..x_T` and observations `y_1..y_T` from the model.
pub fn simulate_trajectory<M: StateSpaceModel>(
    model: &M,
    horizon: usize,
    rng: &mut Stream,
) -> Result<(Vec<M::State>, ObservationSequence)> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut obs = Vec::with_capacity(horizon);
    let mut x = model.sample_initial(rng);
    states.push(x);
    for t in 1..=horizon {
        x = model.sample_transition(t, x, rng);
        states.push(x);
        obs.push(model.sample_observation(t, x, rng));
    }
    Ok((states, ObservationSequence::new(obs)?))
}

pub(crate) fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_csv_round_trip() {
        let obs = ObservationSequence::new(vec![1.0, 0.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        obs.write_csv(&mut buf).unwrap();
        let back = ObservationSequence::from_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(obs, back);
    }

    #[test]
    fn observation_csv_rejects_wrong_header() {
        let err = ObservationSequence::from_csv_reader("x\n1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("header"));
    }

    #[test]
    fn non_finite_observations_are_rejected() {
        assert!(ObservationSequence::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn log_sum_exp_handles_infinities() {
        assert_eq!(
            log_sum_exp([f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
        let v = log_sum_exp([-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
