use std::path::PathBuf;

/// Errors raised by model construction, filtering and the theory layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("row {row} of the {what} is not a probability vector (sum = {sum})")]
    NotStochastic {
        what: &'static str,
        row: usize,
        sum: f64,
    },

    #[error("negative or non-finite entry in the {what} at ({row}, {col}): {value}")]
    InvalidEntry {
        what: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("observation at t = {t} has zero likelihood")]
    ZeroLikelihood { t: usize },

    #[error("particle degeneracy at t = {t}: every selection weight is zero")]
    Degeneracy { t: usize },

    #[error("non-finite test function value {value} at particle {index}")]
    NonFiniteTestValue { index: usize, value: f64 },

    #[error("non-finite integrand value at node {index} (x = {x})")]
    NonFiniteIntegrand { index: usize, x: f64 },

    #[error("enumeration budget exceeded: {paths} paths > {budget}")]
    EnumerationBudget { paths: f64, budget: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("kappa_{t} = {value} is not positive; the likelihood bound fails on this observation")]
    NonPositiveKappa { t: usize, value: f64 },

    #[error("divergent moment integral: {0}")]
    Divergent(String),

    #[error("estimability guard violated: {0}")]
    Estimability(String),

    #[error("replication {index} failed: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error at `{key}`{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config {
        key: String,
        line: Option<usize>,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            line: None,
            message: message.into(),
        }
    }
}
