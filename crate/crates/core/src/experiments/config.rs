use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::spec::toml_error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Clt,
    Mdp,
    Concentration,
    Equivalence,
    Truncation,
    Path,
}

impl ExperimentKind {
    pub fn label(&self) -> &'static str {
        match self {
            ExperimentKind::Clt => "clt",
            ExperimentKind::Mdp => "mdp",
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::Equivalence => "equivalence",
            ExperimentKind::Truncation => "truncation",
            ExperimentKind::Path => "path",
        }
    }
}

/// Where `y_1..y_T` come from. Exactly one field is set after parsing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    /// Single-column CSV with header `y`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Simulate a trajectory from the model with this seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate_seed: Option<u64>,
}

/// `Γ = {|x| > δ}` or `Γ = (lo, hi)`. With neither, `δ` is calibrated so that about
/// `target_hits` of the replications at the largest `N` fall in `Γ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    #[serde(default = "default_target_hits")]
    pub target_hits: f64,
}

impl Default for DeviationConfig {
    fn default() -> Self {
        DeviationConfig {
            delta: None,
            interval: None,
            target_hits: default_target_hits(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: Vec<f64>,
    /// `‖ψ‖∞` for test functions the registry cannot bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sup_norm: Option<f64>,
}

impl Default for ConcentrationConfig {
    fn default() -> Self {
        ConcentrationConfig {
            epsilon: default_epsilon(),
            sup_norm: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassChoice {
    Exponential,
    Subexponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    #[serde(default = "default_c_schedule")]
    pub c_schedule: Vec<f64>,
    #[serde(default = "default_class")]
    pub class: ClassChoice,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig {
            c_schedule: default_c_schedule(),
            class: default_class(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathShape {
    /// `u ↦ x u`.
    Linear,
    /// Rises to `x` at the knee, flat afterwards.
    Ramp,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    #[serde(default = "default_shapes")]
    pub shapes: Vec<PathShape>,
    /// `f(1)`; defaults to the deviation threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<f64>,
    #[serde(default = "default_knee")]
    pub knee: f64,
    /// Radius of the sup-norm tube; defaults to half the endpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default = "default_cells")]
    pub cells: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            shapes: default_shapes(),
            endpoint: None,
            knee: default_knee(),
            eta: None,
            cells: default_cells(),
        }
    }
}

/// One experiment run: a model and observation record, a test function `ψ_T`, the `N`
/// schedule with `b_N = N^α`, replication count and master seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in model name or path to a model file.
    pub model: String,
    pub horizon: usize,
    pub test_function: String,
    pub n_schedule: Vec<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_experiments")]
    pub experiments: Vec<ExperimentKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub observations: ObservationSource,
    #[serde(default)]
    pub deviation: DeviationConfig,
    #[serde(default)]
    pub concentration: ConcentrationConfig,
    #[serde(default)]
    pub truncation: TruncationConfig,
    #[serde(default)]
    pub path: PathConfig,
}

fn default_alpha() -> f64 {
    0.25
}
fn default_target_hits() -> f64 {
    50.0
}
fn default_epsilon() -> Vec<f64> {
    vec![0.05, 0.1, 0.2]
}
fn default_c_schedule() -> Vec<f64> {
    vec![2.0, 4.0, 8.0]
}
fn default_class() -> ClassChoice {
    ClassChoice::Exponential
}
fn default_shapes() -> Vec<PathShape> {
    vec![PathShape::Linear, PathShape::Ramp]
}
fn default_knee() -> f64 {
    0.5
}
fn default_cells() -> usize {
    64
}
fn default_experiments() -> Vec<ExperimentKind> {
    vec![ExperimentKind::Clt, ExperimentKind::Mdp]
}

/// Line of `dotted` (`key` or `section.key`) in a TOML document, if it is written there.
fn locate(text: &str, dotted: &str) -> Option<usize> {
    let (section, key) = match dotted.rsplit_once('.') {
        Some((s, k)) => (s, k),
        None => ("", dotted),
    };
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.starts_with('[') {
            current = l.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = l.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

/// Parse a `--set` value as a TOML value, falling back to a bare string.
fn override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "malformed key"));
    }
    let mut node = table;
    for p in &parts[..parts.len() - 1] {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{p}` is not a section")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), override_value(raw));
    Ok(())
}

impl ExperimentConfig {
    /// Read a config file and apply `key=value` overrides after the file values.
    pub fn from_file(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let parsed: ExperimentConfig =
            toml::from_str(text).map_err(|e| toml_error(text, e).with_key("config"))?;
        let config = if overrides.is_empty() {
            parsed
        } else {
            let mut table: toml::Table = toml::from_str(text).map_err(|e| toml_error(text, e))?;
            for o in overrides {
                let (k, v) = o
                    .split_once('=')
                    .ok_or_else(|| Error::config(o.as_str(), "override must be key=value"))?;
                apply_override(&mut table, k.trim(), v.trim())?;
            }
            toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config {
                    key: format!("--set {}", overrides.join(" --set ")),
                    line: None,
                    message: e.message().to_string(),
                })?
        };
        config.materialize().map_err(|e| match e {
            Error::Config {
                key,
                line: None,
                message,
            } => Error::Config {
                line: locate(text, &key),
                key,
                message,
            },
            other => other,
        })
    }

    /// Check invariants and fill in defaults that depend on other fields.
    fn materialize(mut self) -> Result<Self> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::config(
                "alpha",
                format!(
                    "alpha = {} violates the speed condition: b_N = N^alpha needs 0 < alpha < 1/2",
                    self.alpha
                ),
            ));
        }
        if self.replications < 1 {
            return Err(Error::config(
                "replications",
                "need at least one replication",
            ));
        }
        if self.n_schedule.is_empty() {
            return Err(Error::config("n_schedule", "schedule is empty"));
        }
        if let Some(n) = self.n_schedule.iter().find(|&&n| n < 2) {
            return Err(Error::config(
                "n_schedule",
                format!("N = {n}; every entry must be at least 2"),
            ));
        }
        if self.horizon < 1 {
            return Err(Error::config("horizon", "horizon must be at least 1"));
        }
        let o = &mut self.observations;
        let set =
            o.values.is_some() as u8 + o.file.is_some() as u8 + o.simulate_seed.is_some() as u8;
        match set {
            0 => o.simulate_seed = Some(self.seed),
            1 => {}
            _ => {
                return Err(Error::config(
                    "observations",
                    "give one of `values`, `file` or `simulate_seed`",
                ))
            }
        }
        if let Some(v) = &o.values {
            if v.len() < self.horizon {
                return Err(Error::config(
                    "observations.values",
                    format!("{} values for horizon {}", v.len(), self.horizon),
                ));
            }
        }
        let d = &self.deviation;
        if d.delta.is_some() && d.interval.is_some() {
            return Err(Error::config(
                "deviation",
                "give `delta` or `interval`, not both",
            ));
        }
        if let Some(delta) = d.delta {
            if !(delta >= 0.0 && delta.is_finite()) {
                return Err(Error::config(
                    "deviation.delta",
                    "delta must be finite and non-negative",
                ));
            }
        }
        if let Some([lo, hi]) = d.interval {
            if !(lo < hi) {
                return Err(Error::config("deviation.interval", "need lo < hi"));
            }
        }
        if !(d.target_hits >= 1.0) {
            return Err(Error::config(
                "deviation.target_hits",
                "need at least one expected hit",
            ));
        }
        if self.concentration.epsilon.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::config(
                "concentration.epsilon",
                "every epsilon must be positive",
            ));
        }
        if self.truncation.c_schedule.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::config(
                "truncation.c_schedule",
                "every level must be positive",
            ));
        }
        if !(self.path.knee > 0.0 && self.path.knee <= 1.0) {
            return Err(Error::config("path.knee", "knee must lie in (0, 1]"));
        }
        if self.path.cells < 1 {
            return Err(Error::config("path.cells", "need at least one cell"));
        }
        if let Some(eta) = self.path.eta {
            if !(eta > 0.0) {
                return Err(Error::config("path.eta", "eta must be positive"));
            }
        }
        Ok(self)
    }

    /// The fully materialized config as TOML; parsing it gives back `self`.
    pub fn echo(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn b_n(&self, n: usize) -> f64 {
        (n as f64).powf(self.alpha)
    }

    pub fn runs(&self, kind: ExperimentKind) -> bool {
        self.experiments.contains(&kind)
    }
}

impl Error {
    fn with_key(self, key: &str) -> Error {
        match self {
            Error::Config { line, message, .. } => Error::Config {
                key: key.to_string(),
                line,
                message,
            },
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
model = "coin2"
horizon = 1
test_function = "indicator1"
n_schedule = [1000]
replications = 100
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::parse(MINIMAL, &[]).unwrap();
        assert_eq!(c.alpha, 0.25);
        assert_eq!(c.seed, 0);
        assert_eq!(c.observations.simulate_seed, Some(0));
        assert_eq!(c.experiments, default_experiments());
        assert_eq!(c.path.cells, 64);
    }

    #[test]
    fn alpha_outside_the_speed_range_is_rejected_with_its_line() {
        let text = format!("{MINIMAL}alpha = 0.6\n");
        match ExperimentConfig::parse(&text, &[]).unwrap_err() {
            Error::Config { key, line, message } => {
                assert_eq!(key, "alpha");
                assert_eq!(line, Some(7));
                assert!(message.contains("speed condition"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn overrides_beat_file_values() {
        let c = ExperimentConfig::parse(
            MINIMAL,
            &["replications=5".into(), "deviation.delta=0.3".into()],
        )
        .unwrap();
        assert_eq!(c.replications, 5);
        assert_eq!(c.deviation.delta, Some(0.3));
        let e = ExperimentConfig::parse(MINIMAL, &["alpha=0.7".into()]).unwrap_err();
        assert!(matches!(e, Error::Config { ref key, .. } if key == "alpha"));
    }

    #[test]
    fn unknown_keys_and_type_errors_carry_lines() {
        let text = format!("{MINIMAL}bogus = 3\n");
        match ExperimentConfig::parse(&text, &[]).unwrap_err() {
            Error::Config { line, message, .. } => {
                assert_eq!(line, Some(7));
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("{other}"),
        }
        let text = MINIMAL.replace("horizon = 1", "horizon = \"one\"");
        match ExperimentConfig::parse(&text, &[]).unwrap_err() {
            Error::Config { line, .. } => assert_eq!(line, Some(3)),
            other => panic!("{other}"),
        }
        assert!(ExperimentConfig::parse(MINIMAL, &["nonsense=1".into()]).is_err());
        assert!(ExperimentConfig::parse(MINIMAL, &["replications".into()]).is_err());
    }

    #[test]
    fn invariant_violations() {
        for (bad, key) in [
            ("n_schedule = [1000]", "n_schedule = [1]"),
            ("replications = 100", "replications = 0"),
        ] {
            let text = MINIMAL.replace(bad, key);
            assert!(ExperimentConfig::parse(&text, &[]).is_err(), "{key}");
        }
        let both = format!("{MINIMAL}[deviation]\ndelta = 0.1\ninterval = [0.1, 0.2]\n");
        match ExperimentConfig::parse(&both, &[]).unwrap_err() {
            Error::Config { key, line, .. } => {
                assert_eq!((key.as_str(), line), ("deviation", None))
            }
            other => panic!("{other}"),
        }
        let neg = format!("{MINIMAL}[deviation]\ndelta = -0.1\n");
        match ExperimentConfig::parse(&neg, &[]).unwrap_err() {
            Error::Config { line, .. } => assert_eq!(line, Some(8)),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn echo_round_trips() {
        let text = format!(
            "{MINIMAL}experiments = [\"mdp\", \"path\"]\n[observations]\nvalues = [1.0]\n[path]\neta = 0.2\nshapes = [\"zero\"]\n"
        );
        let c = ExperimentConfig::parse(&text, &["seed=9".into()]).unwrap();
        let echoed = c.echo().unwrap();
        assert_eq!(ExperimentConfig::parse(&echoed, &[]).unwrap(), c);
        let d = ExperimentConfig::parse(MINIMAL, &[]).unwrap();
        assert_eq!(ExperimentConfig::parse(&d.echo().unwrap(), &[]).unwrap(), d);
    }
}
