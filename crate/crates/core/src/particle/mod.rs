//! The bootstrap particle filter in its selection/mutation form.
//!
//! One step draws `N` i.i.d. particles from the mixture
//! `f^N_{t|t} = Σ_i ω_i â_t(x_{i,t-1}, ·)` with `ω_i ∝ b̂_t(x_{i,t-1})`:
//! an ancestor is picked by a multinomial draw (alias table), then moved by
//! the emission-tilted kernel `â_t`.

mod fluctuation;

pub use fluctuation::{
    fluctuation_decomposition, mixture_moments, particle_profile_path, ExactInputs,
    FluctuationRecord, ProfilePath,
};

use rand::SeedableRng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::model::{log_sum_exp, ObservationSequence, StateSpaceModel, StepKernel};
use crate::stream::{Role, Stream, StreamKey};

/// One generation `(x_{i,t})_{i ≤ N}` of the particle system.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble<S> {
    particles: Vec<S>,
    time_index: usize,
    /// `log b̂_t(x_{i,t-1})` of the generation this one was drawn from; empty at `t = 0`.
    log_selection_weights: Vec<f64>,
    ancestors: Vec<usize>,
}

impl<S: Copy> ParticleEnsemble<S> {
    /// An ensemble at time 0, or any ensemble handed in from outside the filter.
    pub fn from_particles(particles: Vec<S>, time_index: usize) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidParameter(
                "an ensemble needs at least one particle".into(),
            ));
        }
        Ok(ParticleEnsemble {
            particles,
            time_index,
            log_selection_weights: Vec::new(),
            ancestors: Vec::new(),
        })
    }

    pub fn particles(&self) -> &[S] {
        &self.particles
    }

    pub fn time_index(&self) -> usize {
        self.time_index
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn log_selection_weights(&self) -> &[f64] {
        &self.log_selection_weights
    }

    /// Ancestor index of every particle; empty at `t = 0`.
    pub fn ancestors(&self) -> &[usize] {
        &self.ancestors
    }

    /// The normalised selection probabilities `ω_i` that produced this generation.
    pub fn selection_probabilities(&self) -> Vec<f64> {
        let total = log_sum_exp(self.log_selection_weights.iter().copied());
        self.log_selection_weights
            .iter()
            .map(|w| (w - total).exp())
            .collect()
    }
}

/// `N` independent draws from `a_0 dμ`.
pub fn init_particles<M: StateSpaceModel>(
    model: &M,
    n: usize,
    rng: &mut Stream,
) -> Result<ParticleEnsemble<M::State>> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    ParticleEnsemble::from_particles((0..n).map(|_| model.sample_initial(rng)).collect(), 0)
}

/// `log b̂_t(x_prev)` for a single state.
pub fn selection_weight<M: StateSpaceModel>(
    model: &M,
    t: usize,
    x_prev: M::State,
    y: f64,
) -> Result<f64> {
    Ok(model.step_kernel(t, y)?.log_selection_weight(x_prev))
}

/// Advance the ensemble from `t - 1` to `t` using observation `y_t`.
pub fn filter_step<M: StateSpaceModel>(
    model: &M,
    ensemble: &ParticleEnsemble<M::State>,
    y: f64,
    rng: &mut Stream,
) -> Result<ParticleEnsemble<M::State>> {
    let kernel = model.step_kernel(ensemble.time_index + 1, y)?;
    let mut mutation = Stream::from_rng(rng);
    filter_step_with(&kernel, ensemble, rng, &mut mutation)
}

/// [`filter_step`] with a prepared kernel and separate selection and mutation streams.
pub fn filter_step_with<S: Copy, K: StepKernel<S>>(
    kernel: &K,
    ensemble: &ParticleEnsemble<S>,
    selection: &mut Stream,
    mutation: &mut Stream,
) -> Result<ParticleEnsemble<S>> {
    let t = ensemble.time_index + 1;
    let log_w: Vec<f64> = ensemble
        .particles
        .iter()
        .map(|&x| kernel.log_selection_weight(x))
        .collect();
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::Degeneracy { t });
    }
    let weights: Vec<f64> = log_w.iter().map(|w| (w - max).exp()).collect();
    let n = ensemble.len();
    let ancestors: Vec<usize> = if n == 1 {
        vec![0]
    } else {
        let alias = WeightedAliasIndex::new(weights).map_err(|_| Error::Degeneracy { t })?;
        (0..n).map(|_| alias.sample(selection)).collect()
    };
    let particles = ancestors
        .iter()
        .map(|&a| kernel.sample_mutation(ensemble.particles[a], mutation))
        .collect();
    Ok(ParticleEnsemble {
        particles,
        time_index: t,
        log_selection_weights: log_w,
        ancestors,
    })
}

/// Empirical `(N^{-1} Σ ψ(x_i), N^{-1} Σ (ψ(x_i) − m)²)`.
pub fn particle_moments<S: Copy>(
    ensemble: &ParticleEnsemble<S>,
    psi: impl Fn(S) -> f64,
) -> Result<(f64, f64)> {
    let values = evaluate(ensemble, &psi)?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var))
}

pub(crate) fn evaluate<S: Copy>(
    ensemble: &ParticleEnsemble<S>,
    psi: &impl Fn(S) -> f64,
) -> Result<Vec<f64>> {
    ensemble
        .particles
        .iter()
        .enumerate()
        .map(|(index, &x)| {
            let value = psi(x);
            if value.is_finite() {
                Ok(value)
            } else {
                Err(Error::NonFiniteTestValue { index, value })
            }
        })
        .collect()
}

/// A model, an observation record and the step kernels for `t = 1..T`, prepared once
/// and shared read-only by every replication.
pub struct ParticleFilter<'m, M: StateSpaceModel> {
    model: &'m M,
    kernels: Vec<M::Kernel<'m>>,
}

impl<'m, M: StateSpaceModel> ParticleFilter<'m, M> {
    pub fn new(model: &'m M, obs: &ObservationSequence) -> Result<Self> {
        let kernels = (1..=obs.horizon())
            .map(|t| model.step_kernel(t, obs.get(t)))
            .collect::<Result<_>>()?;
        Ok(ParticleFilter { model, kernels })
    }

    pub fn model(&self) -> &M {
        self.model
    }

    pub fn horizon(&self) -> usize {
        self.kernels.len()
    }

    /// Step kernel for `t ∈ 1..=T`.
    pub fn kernel(&self, t: usize) -> &M::Kernel<'m> {
        &self.kernels[t - 1]
    }

    /// Run replication `replication` with `n` particles up to `horizon`, keeping every generation.
    pub fn run(
        &self,
        n: usize,
        horizon: usize,
        seed: u64,
        replication: u64,
    ) -> Result<Vec<ParticleEnsemble<M::State>>> {
        let mut out = Vec::with_capacity(horizon + 1);
        self.run_with(n, horizon, seed, replication, |e| out.push(e.clone()))?;
        Ok(out)
    }

    /// Run and hand each generation `t = 0..=horizon` to `visit` without keeping the history.
    pub fn run_with(
        &self,
        n: usize,
        horizon: usize,
        seed: u64,
        replication: u64,
        mut visit: impl FnMut(&ParticleEnsemble<M::State>),
    ) -> Result<ParticleEnsemble<M::State>> {
        if horizon > self.horizon() {
            return Err(Error::Dimension(format!(
                "horizon {horizon} exceeds the {} observations",
                self.horizon()
            )));
        }
        let mut rng = StreamKey::new(seed, replication, 0, Role::Initial).stream();
        let mut ensemble = init_particles(self.model, n, &mut rng)?;
        visit(&ensemble);
        for t in 1..=horizon {
            let mut sel = StreamKey::new(seed, replication, t as u64, Role::Selection).stream();
            let mut mu = StreamKey::new(seed, replication, t as u64, Role::Mutation).stream();
            ensemble = filter_step_with(self.kernel(t), &ensemble, &mut sel, &mut mu)?;
            visit(&ensemble);
        }
        Ok(ensemble)
    }
}

/// Write generations as CSV rows `replication, t, i, x, log_weight`; the weight is
/// `log b̂_t` of the ancestor and left empty at `t = 0`.
pub fn write_ensembles_csv<W: std::io::Write, S: Copy>(
    writer: W,
    replication: usize,
    ensembles: &[ParticleEnsemble<S>],
    coordinate: impl Fn(S) -> f64,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["replication", "t", "i", "x", "log_weight"])?;
    for e in ensembles {
        for (i, &x) in e.particles.iter().enumerate() {
            let lw = e
                .ancestors
                .get(i)
                .map(|&a| e.log_selection_weights[a].to_string())
                .unwrap_or_default();
            w.write_record([
                replication.to_string(),
                e.time_index.to_string(),
                i.to_string(),
                coordinate(x).to_string(),
                lw,
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<ensemble dump>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FiniteHmm;
    use crate::stream::seeded;

    #[test]
    fn init_is_deterministic_and_balanced() {
        let m = FiniteHmm::coin2();
        let a = init_particles(&m, 100_000, &mut seeded(7)).unwrap();
        let b = init_particles(&m, 100_000, &mut seeded(7)).unwrap();
        assert_eq!(a, b);
        let ones = a.particles().iter().filter(|&&x| x == 1).count() as f64;
        let sd = (100_000.0 * 0.25f64).sqrt();
        assert!((ones - 50_000.0).abs() < 3.0 * sd);
    }

    #[test]
    fn singleton_ensemble() {
        let m = FiniteHmm::coin2();
        let e = init_particles(&m, 1, &mut seeded(1)).unwrap();
        assert_eq!(e.len(), 1);
        let next = filter_step(&m, &e, 1.0, &mut seeded(2)).unwrap();
        assert_eq!(next.ancestors(), &[0]);
        assert!(init_particles(&m, 0, &mut seeded(1)).is_err());
    }

    #[test]
    fn coin2_selection_weights() {
        let m = FiniteHmm::coin2();
        assert!((selection_weight(&m, 1, 0, 1.0).unwrap() - 0.25f64.ln()).abs() < 1e-15);
        assert!((selection_weight(&m, 1, 1, 1.0).unwrap() - 0.60f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn single_positive_weight_selects_one_ancestor() {
        // emission kills state 0 entirely and the chain is the identity
        let m = FiniteHmm::new(
            vec![0.5, 0.5],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        let e = ParticleEnsemble::from_particles(vec![1, 0, 0, 0, 0], 0).unwrap();
        let next = filter_step(&m, &e, 1.0, &mut seeded(3)).unwrap();
        assert!(next.ancestors().iter().all(|&a| a == 0));
        assert!(next.particles().iter().all(|&x| x == 1));
        let p = next.selection_probabilities();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_weights_is_degeneracy() {
        let m = FiniteHmm::new(
            vec![1.0, 0.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        let e = ParticleEnsemble::from_particles(vec![0, 0, 0], 0).unwrap();
        assert!(matches!(
            filter_step(&m, &e, 1.0, &mut seeded(3)),
            Err(Error::Degeneracy { t: 1 })
        ));
    }

    #[test]
    fn moments_of_simple_ensembles() {
        let e = ParticleEnsemble::from_particles(vec![0usize, 1, 0, 1], 0).unwrap();
        assert_eq!(particle_moments(&e, |x| x as f64).unwrap(), (0.5, 0.25));
        assert_eq!(particle_moments(&e, |_| 3.0).unwrap(), (3.0, 0.0));
        assert!(matches!(
            particle_moments(&e, |x| if x == 1 { f64::NAN } else { 0.0 }),
            Err(Error::NonFiniteTestValue { index: 1, .. })
        ));
    }

    #[test]
    fn runs_are_reproducible() {
        let m = FiniteHmm::coin2();
        let obs = ObservationSequence::new(vec![1.0, 0.0]).unwrap();
        let pf = ParticleFilter::new(&m, &obs).unwrap();
        assert_eq!(pf.run(50, 2, 9, 4).unwrap(), pf.run(50, 2, 9, 4).unwrap());
        assert_ne!(pf.run(50, 2, 9, 4).unwrap(), pf.run(50, 2, 9, 5).unwrap());
        assert!(pf.run(50, 3, 9, 4).is_err());
    }

    #[test]
    fn dump_has_one_row_per_particle() {
        let m = FiniteHmm::coin2();
        let obs = ObservationSequence::new(vec![1.0]).unwrap();
        let run = ParticleFilter::new(&m, &obs)
            .unwrap()
            .run(4, 1, 0, 0)
            .unwrap();
        let mut buf = Vec::new();
        write_ensembles_csv(&mut buf, 0, &run, |x| x as f64).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 8);
        assert!(text.lines().nth(1).unwrap().ends_with(','));
    }
}
