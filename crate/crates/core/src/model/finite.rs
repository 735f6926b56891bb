use rand::Rng;

use super::{StateSpaceModel, StepKernel, Support};
use crate::error::{Error, Result};
use crate::exact::Discretization;
use crate::stream::Stream;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Finite-state hidden Markov model with finitely many observation symbols.
///
/// Observations are symbol indices stored as `f64`; a value that is not an
/// integer in `0..symbols` has zero likelihood.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteHmm {
    name: String,
    initial: Vec<f64>,
    /// One matrix per time step; the last one is reused beyond its index.
    transitions: Vec<Vec<Vec<f64>>>,
    emission: Vec<Vec<f64>>,
}

fn check_probability_vector(what: &'static str, row: usize, v: &[f64]) -> Result<()> {
    for (col, &x) in v.iter().enumerate() {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::InvalidEntry {
                what,
                row,
                col,
                value: x,
            });
        }
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::NotStochastic { what, row, sum });
    }
    Ok(())
}

impl FiniteHmm {
    pub fn new(
        initial: Vec<f64>,
        transition: Vec<Vec<f64>>,
        emission: Vec<Vec<f64>>,
    ) -> Result<Self> {
        Self::time_varying(initial, vec![transition], emission)
    }

    pub fn time_varying(
        initial: Vec<f64>,
        transitions: Vec<Vec<Vec<f64>>>,
        emission: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let k = initial.len();
        if k == 0 {
            return Err(Error::Dimension("empty state space".into()));
        }
        if transitions.is_empty() {
            return Err(Error::Dimension("no transition matrix".into()));
        }
        check_probability_vector("initial distribution", 0, &initial)?;
        for transition in &transitions {
            if transition.len() != k || transition.iter().any(|r| r.len() != k) {
                return Err(Error::Dimension(format!(
                    "transition matrix must be {k}x{k}"
                )));
            }
            for (i, row) in transition.iter().enumerate() {
                check_probability_vector("transition matrix", i, row)?;
            }
        }
        if emission.len() != k {
            return Err(Error::Dimension(format!(
                "emission matrix must have {k} rows"
            )));
        }
        let symbols = emission[0].len();
        if symbols == 0 || emission.iter().any(|r| r.len() != symbols) {
            return Err(Error::Dimension(
                "emission rows must have equal, positive length".into(),
            ));
        }
        for (i, row) in emission.iter().enumerate() {
            check_probability_vector("emission matrix", i, row)?;
        }
        Ok(FiniteHmm {
            name: "finite".into(),
            initial,
            transitions,
            emission,
        })
    }

    /// The two-state reference model used throughout the tests and examples.
    pub fn coin2() -> Self {
        FiniteHmm::new(
            vec![0.5, 0.5],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            vec![vec![0.8, 0.2], vec![0.3, 0.7]],
        )
        .expect("coin2 is stochastic")
        .with_name("coin2")
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn states(&self) -> usize {
        self.initial.len()
    }

    pub fn symbols(&self) -> usize {
        self.emission[0].len()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self, t: usize) -> &[Vec<f64>] {
        let idx = t.saturating_sub(1).min(self.transitions.len() - 1);
        &self.transitions[idx]
    }

    pub fn emission(&self) -> &[Vec<f64>] {
        &self.emission
    }

    pub fn symbol(&self, y: f64) -> Option<usize> {
        if y >= 0.0 && y.fract() == 0.0 && (y as usize) < self.symbols() {
            Some(y as usize)
        } else {
            None
        }
    }

    /// `b_t(x, y)` as a plain probability.
    pub fn emission_probability(&self, x: usize, y: f64) -> f64 {
        self.symbol(y).map_or(0.0, |s| self.emission[x][s])
    }
}

fn sample_index(probs: &[f64], rng: &mut Stream) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last index with positive mass
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Per-step tables: `b̂_t` per source state and the cumulative `â_t` rows.
pub struct FiniteKernel {
    tilted: Vec<Vec<f64>>,
    log_bhat: Vec<f64>,
    cumulative: Vec<Vec<f64>>,
}

impl StepKernel<usize> for FiniteKernel {
    fn log_selection_weight(&self, x_prev: usize) -> f64 {
        self.log_bhat[x_prev]
    }

    fn sample_mutation(&self, x_prev: usize, rng: &mut Stream) -> usize {
        let row = &self.cumulative[x_prev];
        let u: f64 = rng.random::<f64>() * row[row.len() - 1];
        // states are few; linear scan beats binary search here
        row.iter().position(|&c| u < c).unwrap_or_else(|| {
            self.tilted[x_prev]
                .iter()
                .rposition(|&p| p > 0.0)
                .unwrap_or(row.len() - 1)
        })
    }

    fn apply(&self, x_prev: usize, psi: &dyn Fn(usize) -> f64) -> f64 {
        self.tilted[x_prev]
            .iter()
            .enumerate()
            .map(|(j, w)| if *w == 0.0 { 0.0 } else { w * psi(j) })
            .sum()
    }
}

impl StateSpaceModel for FiniteHmm {
    type State = usize;
    type Kernel<'a> = FiniteKernel;

    fn name(&self) -> &str {
        &self.name
    }

    fn support(&self) -> Support {
        Support::Finite {
            size: self.states(),
        }
    }

    fn log_initial_density(&self, x: usize) -> f64 {
        self.initial[x].ln()
    }

    fn log_transition_density(&self, t: usize, x: usize, x_next: usize) -> f64 {
        self.transition(t)[x][x_next].ln()
    }

    fn log_emission_density(&self, _t: usize, x: usize, y: f64) -> f64 {
        self.emission_probability(x, y).ln()
    }

    fn sample_initial(&self, rng: &mut Stream) -> usize {
        sample_index(&self.initial, rng)
    }

    fn sample_transition(&self, t: usize, x: usize, rng: &mut Stream) -> usize {
        sample_index(&self.transition(t)[x], rng)
    }

    fn sample_observation(&self, _t: usize, x: usize, rng: &mut Stream) -> f64 {
        sample_index(&self.emission[x], rng) as f64
    }

    fn step_kernel(&self, t: usize, y: f64) -> Result<FiniteKernel> {
        let s = self.symbol(y).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "observation {y} at t = {t} is not a symbol in 0..{}",
                self.symbols()
            ))
        })?;
        let a = self.transition(t);
        let k = self.states();
        let mut tilted = vec![vec![0.0; k]; k];
        let mut cumulative = vec![vec![0.0; k]; k];
        let mut log_bhat = vec![0.0; k];
        for i in 0..k {
            let mut acc = 0.0;
            for j in 0..k {
                let w = a[i][j] * self.emission[j][s];
                tilted[i][j] = w;
                acc += w;
                cumulative[i][j] = acc;
            }
            log_bhat[i] = acc.ln();
        }
        Ok(FiniteKernel {
            tilted,
            log_bhat,
            cumulative,
        })
    }

    fn coordinate(x: usize) -> f64 {
        x as f64
    }
}

impl super::ExactModel for FiniteHmm {
    fn discretization(&self) -> Discretization<usize> {
        Discretization::finite(self.states())
    }

    fn is_time_homogeneous(&self) -> bool {
        self.transitions.len() == 1
    }
}
