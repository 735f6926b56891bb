use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A named test function of the state coordinate.
#[derive(Clone)]
pub struct TestFunction {
    name: String,
    f: Scalar,
    sup_norm: Option<f64>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("sup_norm", &self.sup_norm)
            .finish()
    }
}

const NAMES: [(&str, &str); 9] = [
    ("indicatorK", "1{x = K} for an integer K, e.g. indicator1"),
    ("constant", "1"),
    ("identity", "x"),
    ("square", "x^2"),
    ("cube", "x^3"),
    ("abs", "|x|"),
    ("logplus", "log max(|x|, 1)"),
    ("poly:c0,c1,..", "c0 + c1 x + c2 x^2 + .."),
    (
        "table:v0,v1,..",
        "v_k at state k of a finite model, 0 elsewhere",
    ),
];

pub fn test_function_names() -> Vec<(&'static str, &'static str)> {
    NAMES.to_vec()
}

fn numbers(list: &str, name: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    Error::InvalidParameter(format!("bad number `{s}` in test function `{name}`"))
                })
        })
        .collect()
}

impl TestFunction {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sup_norm: Option<f64>,
    ) -> Self {
        TestFunction {
            name: name.into(),
            f: Arc::new(f),
            sup_norm,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        let t = match name {
            "constant" => Self::new(name, |_| 1.0, Some(1.0)),
            "identity" => Self::new(name, |x| x, None),
            "square" => Self::new(name, |x| x * x, None),
            "cube" => Self::new(name, |x| x * x * x, None),
            "abs" => Self::new(name, f64::abs, None),
            "logplus" => Self::new(name, |x: f64| x.abs().max(1.0).ln(), None),
            _ => {
                if let Some(k) = name.strip_prefix("indicator") {
                    let k: i64 = k.parse().map_err(|_| {
                        Error::InvalidParameter(format!(
                            "`{name}`: expected indicatorK with integer K"
                        ))
                    })?;
                    let k = k as f64;
                    Self::new(name, move |x| (x == k) as u8 as f64, Some(1.0))
                } else if let Some(list) = name.strip_prefix("poly:") {
                    let c = numbers(list, name)?;
                    let sup = if c.iter().skip(1).all(|&v| v == 0.0) {
                        Some(c[0].abs())
                    } else {
                        None
                    };
                    Self::new(
                        name,
                        move |x| c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci),
                        sup,
                    )
                } else if let Some(list) = name.strip_prefix("table:") {
                    let v = numbers(list, name)?;
                    let sup = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
                    Self::new(
                        name,
                        move |x| {
                            if x >= 0.0 && x.fract() == 0.0 {
                                v.get(x as usize).copied().unwrap_or(0.0)
                            } else {
                                0.0
                            }
                        },
                        Some(sup),
                    )
                } else {
                    let known: Vec<&str> = NAMES.iter().map(|(n, _)| *n).collect();
                    return Err(Error::InvalidParameter(format!(
                        "unknown test function `{name}`; known: {}",
                        known.join(", ")
                    )));
                }
            }
        };
        Ok(t)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    /// `‖ψ‖∞` when it is known in closed form.
    pub fn sup_norm(&self) -> Option<f64> {
        self.sup_norm
    }

    pub fn as_fn(&self) -> impl Fn(f64) -> f64 + Clone + Send + Sync + 'static {
        let f = self.f.clone();
        move |x| f(x)
    }
}
