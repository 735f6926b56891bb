use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ContinuousModel, Emission, GaussianPrior, GridSpec, Noise, ObservationSequence, ScalarMap,
};

/// Scalar linear-Gaussian model
/// `x_t = φ x_{t-1} + N(0, q)`, `y_t = h x_t + N(0, r)`, `x_0 ~ N(m_0, p_0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussian {
    pub initial: GaussianPrior,
    pub coefficient: f64,
    pub state_noise: f64,
    pub observation_coefficient: f64,
    pub observation_noise: f64,
}

impl LinearGaussian {
    pub fn to_model(&self) -> Result<ContinuousModel> {
        self.to_model_on(GridSpec::default())
    }

    pub fn to_model_on(&self, grid: GridSpec) -> Result<ContinuousModel> {
        ContinuousModel::new(
            "linear_gaussian",
            self.initial,
            ScalarMap::Linear {
                slope: self.coefficient,
                intercept: 0.0,
            },
            self.state_noise,
            Emission::Additive {
                observation: ScalarMap::Linear {
                    slope: self.observation_coefficient,
                    intercept: 0.0,
                },
                noise: Noise::Gaussian {
                    variance: self.observation_noise,
                },
            },
            grid,
        )
    }

    /// Recover the parameters of a continuous model that is linear-Gaussian.
    pub fn from_model(model: &ContinuousModel) -> Option<Self> {
        let coefficient = match model.drift() {
            ScalarMap::Identity => 1.0,
            ScalarMap::Linear { slope, intercept } if *intercept == 0.0 => *slope,
            _ => return None,
        };
        let (h, r) = match model.emission() {
            Emission::Additive {
                observation,
                noise: Noise::Gaussian { variance },
            } => match observation {
                ScalarMap::Identity => (1.0, *variance),
                ScalarMap::Linear { slope, intercept } if *intercept == 0.0 => (*slope, *variance),
                _ => return None,
            },
            _ => return None,
        };
        Some(LinearGaussian {
            initial: model.initial(),
            coefficient,
            state_noise: model.state_noise_variance(),
            observation_coefficient: h,
            observation_noise: r,
        })
    }
}

/// Filter means and variances `(m_{t|t}, P_{t|t})` for `t = 1..T`.
pub fn kalman_filter(
    params: &LinearGaussian,
    obs: &ObservationSequence,
) -> Result<Vec<(f64, f64)>> {
    if !(params.state_noise >= 0.0
        && params.observation_noise > 0.0
        && params.initial.variance >= 0.0)
    {
        return Err(Error::InvalidParameter(
            "Kalman filter needs a positive observation noise variance and non-negative state noise".into(),
        ));
    }
    let mut mean = params.initial.mean;
    let mut var = params.initial.variance;
    let h = params.observation_coefficient;
    let mut out = Vec::with_capacity(obs.horizon());
    for &y in obs.values() {
        let pm = params.coefficient * mean;
        let pv = params.coefficient * params.coefficient * var + params.state_noise;
        let s = h * h * pv + params.observation_noise;
        let gain = pv * h / s;
        mean = pm + gain * (y - h * pm);
        var = (1.0 - gain * h) * pv;
        out.push((mean, var));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn static_prior(r: f64) -> LinearGaussian {
        LinearGaussian {
            initial: GaussianPrior::standard(),
            coefficient: 1.0,
            state_noise: 0.0,
            observation_coefficient: 1.0,
            observation_noise: r,
        }
    }

    #[test]
    fn conjugate_update() {
        let obs = ObservationSequence::new(vec![1.4]).unwrap();
        let out = kalman_filter(&static_prior(1.0), &obs).unwrap();
        assert!((out[0].0 - 0.7).abs() < 1e-15);
        assert!((out[0].1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tiny_observation_noise_tracks_observations() {
        let mut p = static_prior(1e-12);
        p.state_noise = 1.0;
        let obs = ObservationSequence::new(vec![0.3, -1.2, 2.5]).unwrap();
        for (&(m, _), &y) in kalman_filter(&p, &obs).unwrap().iter().zip(obs.values()) {
            assert!((m - y).abs() < 1e-6);
        }
    }

    #[test]
    fn non_positive_noise_is_rejected() {
        let obs = ObservationSequence::new(vec![0.0]).unwrap();
        assert!(kalman_filter(&static_prior(0.0), &obs).is_err());
    }

    #[test]
    fn parameters_round_trip_through_model() {
        let p = LinearGaussian {
            initial: GaussianPrior {
                mean: 0.2,
                variance: 0.8,
            },
            coefficient: 0.5,
            state_noise: 0.5,
            observation_coefficient: 1.5,
            observation_noise: 0.3,
        };
        assert_eq!(LinearGaussian::from_model(&p.to_model().unwrap()), Some(p));
    }
}
