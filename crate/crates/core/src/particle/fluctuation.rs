use serde::Serialize;

use super::{evaluate, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::model::StepKernel;

/// Exact quantities the decomposition is centred on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactInputs {
    /// `m_T(ψ)`.
    pub mean: f64,
    /// `σ_0²(ψ)`; only read at `T = 0`, where the sampling law is `a_0` itself.
    pub variance: f64,
    /// `κ_T`; ignored at `T = 0`.
    pub kappa: f64,
}

/// `M = Q + R`, the substitute `R̃` and the centred sum `K_N` for one replication.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FluctuationRecord {
    pub n: usize,
    pub b_n: f64,
    /// Empirical mean `N^{-1} Σ ψ(x_{i,T})`.
    pub m_empirical: f64,
    /// `m_{N,T}(ψ) = ∫ ψ f^N_{T|T} dμ`, the conditional mean given generation `T - 1`.
    pub m_n: f64,
    pub m_exact: f64,
    /// `σ²_{N,T}(ψ)` under `f^N_{T|T}`.
    pub sigma_sq_n: f64,
    pub m: f64,
    pub q: f64,
    pub r: f64,
    pub r_tilde: f64,
    pub k_n: f64,
}

/// Mean and variance of `ψ` under the particle mixture `f^N_{t|t}` built on `previous`:
/// `Σ L_tψ(x_i) / Σ L_t1(x_i)` and the matching second moment.
pub fn mixture_moments<S: Copy, K: StepKernel<S>>(
    kernel: &K,
    previous: &ParticleEnsemble<S>,
    psi: impl Fn(S) -> f64,
) -> Result<(f64, f64)> {
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for &x in previous.particles() {
        s0 += kernel.apply(x, &|_| 1.0);
        s1 += kernel.apply(x, &psi);
        s2 += kernel.apply(x, &|u| {
            let v = psi(u);
            v * v
        });
    }
    if !(s0 > 0.0) {
        return Err(Error::Degeneracy {
            t: previous.time_index() + 1,
        });
    }
    let mean = s1 / s0;
    Ok((mean, (s2 / s0 - mean * mean).max(0.0)))
}

/// Split `M_N^T(ψ)` into its conditional fluctuation `Q` and bias `R`, and compute `R̃`, `K_N`.
///
/// `previous` is generation `T - 1` with the kernel that produced `current`; pass `None` at `T = 0`,
/// where `R = R̃ = K_N = 0`.
pub fn fluctuation_decomposition<S: Copy, K: StepKernel<S>>(
    current: &ParticleEnsemble<S>,
    previous: Option<(&ParticleEnsemble<S>, &K)>,
    psi: impl Fn(S) -> f64,
    exact: ExactInputs,
    b_n: f64,
) -> Result<FluctuationRecord> {
    if !(b_n > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "b_N must be positive, got {b_n}"
        )));
    }
    let values = evaluate(current, &psi)?;
    let n = values.len();
    let nf = n as f64;
    let scale = 1.0 / (b_n * nf.sqrt());
    let m_empirical = values.iter().sum::<f64>() / nf;
    let m = scale * values.iter().map(|v| v - exact.mean).sum::<f64>();

    let (m_n, sigma_sq_n, r_tilde, k_n) = match previous {
        None => (exact.mean, exact.variance, 0.0, 0.0),
        Some((prev, kernel)) => {
            if prev.time_index() + 1 != current.time_index() {
                return Err(Error::Dimension(
                    "previous generation must be at T - 1".into(),
                ));
            }
            if !(exact.kappa > 0.0) {
                return Err(Error::NonPositiveKappa {
                    t: current.time_index(),
                    value: exact.kappa,
                });
            }
            let (m_n, sigma_sq_n) = mixture_moments(kernel, prev, &psi)?;
            let centred: f64 = prev
                .particles()
                .iter()
                .map(|&x| kernel.apply(x, &psi) - exact.mean * kernel.apply(x, &|_| 1.0))
                .sum();
            let np = prev.len() as f64;
            let r_tilde = centred / (b_n * np.sqrt() * exact.kappa);
            (m_n, sigma_sq_n, r_tilde, centred / np)
        }
    };
    let q = scale * values.iter().map(|v| v - m_n).sum::<f64>();
    Ok(FluctuationRecord {
        n,
        b_n,
        m_empirical,
        m_n,
        m_exact: exact.mean,
        sigma_sq_n,
        m,
        q,
        r: m - q,
        r_tilde,
        k_n,
    })
}

/// The partial-sum path `u ↦ (b_N √N)^{-1} Σ_{i ≤ [Nu]} (ψ(x_i) − m)`, stored by its `N` jump values.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfilePath {
    /// `values[k - 1]` is the path on `[k/N, (k+1)/N)`.
    values: Vec<f64>,
}

impl ProfilePath {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn jump_values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, u: f64) -> f64 {
        let k = (u.clamp(0.0, 1.0) * self.values.len() as f64).floor() as usize;
        if k == 0 {
            0.0
        } else {
            self.values[k.min(self.values.len()) - 1]
        }
    }

    pub fn endpoint(&self) -> f64 {
        *self.values.last().unwrap_or(&0.0)
    }

    /// `sup_u |path(u) − f(u)|` for a continuous `f`, checked at both ends of every step.
    pub fn sup_distance(&self, f: impl Fn(f64) -> f64) -> f64 {
        let n = self.values.len() as f64;
        let mut worst = f(0.0).abs();
        let mut level = 0.0;
        for (k, &v) in self.values.iter().enumerate() {
            // level holds on [k/N, (k+1)/N)
            let a = k as f64 / n;
            let b = (k + 1) as f64 / n;
            worst = worst.max((level - f(a)).abs()).max((level - f(b)).abs());
            level = v;
        }
        worst.max((level - f(1.0)).abs())
    }
}

pub fn particle_profile_path<S: Copy>(
    ensemble: &ParticleEnsemble<S>,
    psi: impl Fn(S) -> f64,
    m_exact: f64,
    b_n: f64,
) -> Result<ProfilePath> {
    let values = evaluate(ensemble, &psi)?;
    let scale = 1.0 / (b_n * (values.len() as f64).sqrt());
    let mut acc = 0.0;
    Ok(ProfilePath {
        values: values
            .iter()
            .map(|v| {
                acc += v - m_exact;
                scale * acc
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FiniteHmm, ObservationSequence, StateSpaceModel};
    use crate::particle::ParticleFilter;

    fn indicator(x: usize) -> f64 {
        (x == 1) as u8 as f64
    }

    fn coin2_records(n: usize, psi: impl Fn(usize) -> f64 + Copy, shift: f64) -> FluctuationRecord {
        let m = FiniteHmm::coin2();
        let obs = ObservationSequence::new(vec![1.0]).unwrap();
        let pf = ParticleFilter::new(&m, &obs).unwrap();
        let run = pf.run(n, 1, 11, 0).unwrap();
        let exact = ExactInputs {
            mean: 0.741176470588 + shift,
            variance: 0.0,
            kappa: 0.425,
        };
        fluctuation_decomposition(
            &run[1],
            Some((&run[0], pf.kernel(1))),
            psi,
            exact,
            (n as f64).powf(0.25),
        )
        .unwrap()
    }

    #[test]
    fn decomposition_is_exact() {
        let r = coin2_records(500, indicator, 0.0);
        assert_eq!(r.m, r.q + r.r);
        assert!(r.sigma_sq_n >= 0.0);
    }

    #[test]
    fn constant_test_function_has_no_fluctuation() {
        let m = FiniteHmm::coin2();
        let obs = ObservationSequence::new(vec![1.0]).unwrap();
        let pf = ParticleFilter::new(&m, &obs).unwrap();
        let run = pf.run(200, 1, 3, 0).unwrap();
        let exact = ExactInputs {
            mean: 2.0,
            variance: 0.0,
            kappa: 0.425,
        };
        let r =
            fluctuation_decomposition(&run[1], Some((&run[0], pf.kernel(1))), |_| 2.0, exact, 3.0)
                .unwrap();
        for v in [r.m, r.q, r.r, r.r_tilde, r.k_n] {
            assert!(v.abs() < 1e-13, "{v}");
        }
    }

    #[test]
    fn shifting_psi_and_its_mean_leaves_m_unchanged() {
        let a = coin2_records(300, indicator, 0.0);
        let b = coin2_records(300, |x| indicator(x) + 5.0, 5.0);
        assert!((a.m - b.m).abs() < 1e-12);
    }

    #[test]
    fn time_zero_has_no_bias_term() {
        let m = FiniteHmm::coin2();
        let e = super::super::init_particles(&m, 100, &mut crate::stream::seeded(0)).unwrap();
        let exact = ExactInputs {
            mean: 0.5,
            variance: 0.25,
            kappa: 1.0,
        };
        let r = fluctuation_decomposition::<usize, <FiniteHmm as StateSpaceModel>::Kernel<'_>>(
            &e, None, indicator, exact, 1.0,
        )
        .unwrap();
        assert_eq!((r.r, r.r_tilde), (0.0, 0.0));
        assert_eq!(r.q, r.m);
    }

    #[test]
    fn profile_path_endpoints() {
        let e = ParticleEnsemble::from_particles(vec![1usize, 0, 1, 1], 1).unwrap();
        let p = particle_profile_path(&e, indicator, 0.5, 1.0).unwrap();
        assert_eq!(p.eval(0.2), 0.0);
        assert!((p.eval(1.0) - 0.5).abs() < 1e-15);
        assert!((p.eval(0.5) - 0.0).abs() < 1e-15);
        assert_eq!(p.endpoint(), p.eval(1.0));
        let flat = particle_profile_path(&e, |_| 1.0, 1.0, 1.0).unwrap();
        assert!(flat.jump_values().iter().all(|&v| v == 0.0));
        assert_eq!(flat.sup_distance(|_| 0.0), 0.0);
    }

    #[test]
    fn endpoint_equals_m() {
        let r = coin2_records(400, indicator, 0.0);
        let m = FiniteHmm::coin2();
        let obs = ObservationSequence::new(vec![1.0]).unwrap();
        let run = ParticleFilter::new(&m, &obs)
            .unwrap()
            .run(400, 1, 11, 0)
            .unwrap();
        let p =
            particle_profile_path(&run[1], indicator, 0.741176470588, 400f64.powf(0.25)).unwrap();
        assert!((p.endpoint() - r.m).abs() < 1e-12);
    }
}
