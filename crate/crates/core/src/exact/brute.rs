use super::{DensityKind, FilterDensity, Representation};
use crate::error::{Error, Result};
use crate::model::{FiniteHmm, ObservationSequence};

pub const BRUTE_FORCE_BUDGET: f64 = 1e7;

/// Enumerate every path `x_0..x_T`, weight it by `a_0 ∏ a_t ∏ b_t` and
/// marginalise onto `x_T`. Returns the unnormalised marginal and the total path weight.
///
/// Deliberately independent of [`super::ExactSystem`]: it reads the matrices directly.
pub fn brute_force_posterior(
    model: &FiniteHmm,
    obs: &ObservationSequence,
) -> Result<(Vec<f64>, f64)> {
    let k = model.states();
    let horizon = obs.horizon();
    let paths = (k as f64).powi(horizon as i32 + 1);
    if paths > BRUTE_FORCE_BUDGET {
        return Err(Error::EnumerationBudget {
            paths,
            budget: BRUTE_FORCE_BUDGET,
        });
    }
    let symbols: Vec<Option<usize>> = obs.values().iter().map(|&y| model.symbol(y)).collect();
    let mut marginal = vec![0.0; k];
    let mut path = vec![0usize; horizon + 1];
    loop {
        let mut w = model.initial()[path[0]];
        for t in 1..=horizon {
            if w == 0.0 {
                break;
            }
            let b = symbols[t - 1].map_or(0.0, |s| model.emission()[path[t]][s]);
            w *= model.transition(t)[path[t - 1]][path[t]] * b;
        }
        marginal[path[horizon]] += w;
        // odometer increment
        let mut pos = 0;
        loop {
            if pos > horizon {
                let total = marginal.iter().sum();
                return Ok((marginal, total));
            }
            path[pos] += 1;
            if path[pos] < k {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
    }
}

/// Normalised filter `f_{T|T}` by joint-path enumeration.
pub fn brute_force_filter(model: &FiniteHmm, obs: &ObservationSequence) -> Result<FilterDensity> {
    let (marginal, total) = brute_force_posterior(model, obs)?;
    if !(total > 0.0) {
        return Err(Error::ZeroLikelihood { t: obs.horizon() });
    }
    Ok(FilterDensity {
        representation: Representation::Finite {
            probabilities: marginal.iter().map(|m| m / total).collect(),
        },
        time_index: obs.horizon(),
        kind: DensityKind::Filter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coin2_one_observation() {
        let obs = ObservationSequence::new(vec![1.0]).unwrap();
        let f = brute_force_filter(&FiniteHmm::coin2(), &obs).unwrap();
        let p = f.values().unwrap();
        assert!((p[0] - 0.258824).abs() < 1e-6);
        assert!((p[1] - 0.741176).abs() < 1e-6);
    }

    #[test]
    fn uniform_model_gives_uniform_posterior() {
        let u = vec![1.0 / 3.0; 3];
        let m = FiniteHmm::new(u.clone(), vec![u.clone(); 3], vec![vec![0.5, 0.5]; 3]).unwrap();
        let obs = ObservationSequence::new(vec![0.0, 1.0, 1.0]).unwrap();
        for p in brute_force_filter(&m, &obs).unwrap().values().unwrap() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let obs = ObservationSequence::new(vec![0.0; 30]).unwrap();
        assert!(matches!(
            brute_force_filter(&FiniteHmm::coin2(), &obs),
            Err(Error::EnumerationBudget { .. })
        ));
    }
}
