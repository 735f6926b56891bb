use std::path::Path;

use serde::Deserialize;

use super::{ContinuousModel, Emission, FiniteHmm, GaussianPrior, GridSpec, Noise, ScalarMap};
use crate::error::{Error, Result};

/// A model selected by name from the registry or read from a model file.
#[derive(Clone, Debug)]
pub enum ModelSpec {
    Finite(FiniteHmm),
    Continuous(ContinuousModel),
}

const BUILTINS: [(&str, &str); 4] = [
    (
        "coin2",
        "two-state HMM, binary observations (reference model)",
    ),
    (
        "linear_gaussian",
        "x' = 0.5 x + N(0, 0.5), y = x + N(0, 0.5); Kalman-tractable",
    ),
    (
        "nonlinear_additive",
        "x' = 2 sin(x) + N(0, 1), y = 2 tanh(x) + N(0, 0.5)",
    ),
    ("stoch_vol", "x' = 0.9 x + N(0, 0.25), y = exp(x) N(0, 1)"),
];

pub fn builtin_names() -> Vec<(&'static str, &'static str)> {
    BUILTINS.to_vec()
}

impl ModelSpec {
    pub fn builtin(name: &str) -> Result<Self> {
        let spec = match name {
            "coin2" => ModelSpec::Finite(FiniteHmm::coin2()),
            "linear_gaussian" => ModelSpec::Continuous(
                ContinuousModel::nonlinear_additive(
                    ScalarMap::Linear {
                        slope: 0.5,
                        intercept: 0.0,
                    },
                    ScalarMap::Identity,
                    Noise::Gaussian { variance: 0.5 },
                )?
                .with_state_noise(0.5)?
                .with_name("linear_gaussian"),
            ),
            "nonlinear_additive" => ModelSpec::Continuous(ContinuousModel::nonlinear_additive(
                ScalarMap::Sine {
                    amplitude: 2.0,
                    frequency: 1.0,
                },
                ScalarMap::Tanh { scale: 2.0 },
                Noise::Gaussian { variance: 0.5 },
            )?),
            "stoch_vol" => ModelSpec::Continuous(ContinuousModel::stochastic_volatility(
                ScalarMap::Linear {
                    slope: 0.9,
                    intercept: 0.0,
                },
                0.25,
            )?),
            other => {
                let names: Vec<&str> = BUILTINS.iter().map(|(n, _)| *n).collect();
                return Err(Error::InvalidParameter(format!(
                    "unknown model `{other}`; built-in models: {}",
                    names.join(", ")
                )));
            }
        };
        Ok(spec)
    }

    /// A built-in name, or a path to a model description file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if BUILTINS.iter().any(|(n, _)| *n == name_or_path) {
            Self::builtin(name_or_path)
        } else if Path::new(name_or_path).exists() {
            Self::from_file(name_or_path)
        } else {
            Self::builtin(name_or_path)
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ModelFile = toml::from_str(text).map_err(|e| toml_error(text, e))?;
        file.build()
    }

    pub fn name(&self) -> &str {
        use super::StateSpaceModel;
        match self {
            ModelSpec::Finite(m) => m.name(),
            ModelSpec::Continuous(m) => m.name(),
        }
    }
}

pub(crate) fn toml_error(text: &str, e: toml::de::Error) -> Error {
    let line = e
        .span()
        .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1);
    Error::Config {
        key: "model file".into(),
        line,
        message: e.message().to_string(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    model: ModelSection,
    initial: InitialSection,
    transition: TransitionSection,
    emission: EmissionSection,
    grid: Option<GridSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    kind: String,
    name: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    probabilities: Option<Vec<f64>>,
    mean: Option<f64>,
    variance: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionSection {
    matrix: Option<Vec<Vec<f64>>>,
    matrices: Option<Vec<Vec<Vec<f64>>>>,
    drift: Option<ScalarMap>,
    coefficient: Option<f64>,
    noise_variance: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmissionSection {
    matrix: Option<Vec<Vec<f64>>>,
    observation: Option<ScalarMap>,
    coefficient: Option<f64>,
    noise: Option<Noise>,
    noise_variance: Option<f64>,
}

fn required<T>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::config(key, "missing required key"))
}

impl ModelFile {
    fn build(self) -> Result<ModelSpec> {
        let name = self
            .model
            .name
            .clone()
            .unwrap_or_else(|| self.model.kind.clone());
        match self.model.kind.as_str() {
            "finite" => {
                let initial = required(self.initial.probabilities, "initial.probabilities")?;
                let transitions = match (self.transition.matrix, self.transition.matrices) {
                    (Some(m), None) => vec![m],
                    (None, Some(ms)) => ms,
                    _ => return Err(Error::config("transition", "give exactly one of `matrix` or `matrices`")),
                };
                let emission = required(self.emission.matrix, "emission.matrix")?;
                Ok(ModelSpec::Finite(
                    FiniteHmm::time_varying(initial, transitions, emission)?.with_name(name),
                ))
            }
            kind @ ("linear_gaussian" | "nonlinear_additive" | "stoch_vol") => {
                let initial = GaussianPrior {
                    mean: self.initial.mean.unwrap_or(0.0),
                    variance: self.initial.variance.unwrap_or(1.0),
                };
                let q = required(self.transition.noise_variance, "transition.noise_variance")?;
                let drift = match kind {
                    "linear_gaussian" => ScalarMap::Linear {
                        slope: required(self.transition.coefficient, "transition.coefficient")?,
                        intercept: 0.0,
                    },
                    _ => required(self.transition.drift, "transition.drift")?,
                };
                let emission = match kind {
                    "linear_gaussian" => Emission::Additive {
                        observation: ScalarMap::Linear {
                            slope: self.emission.coefficient.unwrap_or(1.0),
                            intercept: 0.0,
                        },
                        noise: Noise::Gaussian {
                            variance: required(self.emission.noise_variance, "emission.noise_variance")?,
                        },
                    },
                    "nonlinear_additive" => Emission::Additive {
                        observation: required(self.emission.observation, "emission.observation")?,
                        noise: required(self.emission.noise, "emission.noise")?,
                    },
                    _ => Emission::StochasticVolatility,
                };
                let grid = self.grid.unwrap_or_default();
                Ok(ModelSpec::Continuous(ContinuousModel::new(name, initial, drift, q, emission, grid)?))
            }
            other => Err(Error::config(
                "model.kind",
                format!("unknown kind `{other}` (finite, linear_gaussian, nonlinear_additive, stoch_vol)"),
            )),
        }
    }
}
