use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::log_sum_exp;

type LogFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ClassKind {
    /// `∃β > 0: ∫ e^{β|ψ|} h⁺ b dμ < ∞`.
    Exponential,
    /// `∀β > 0: ∫ e^{β|ψ|^{4α/(1+2α)}} h⁺ b dμ < ∞`, for `0 < α < ½`.
    Subexponential { alpha: f64 },
}

impl ClassKind {
    pub fn exponent(&self) -> f64 {
        match *self {
            ClassKind::Exponential => 1.0,
            ClassKind::Subexponential { alpha } => 4.0 * alpha / (1.0 + 2.0 * alpha),
        }
    }
}

/// Envelope `h_T⁺`, emission slice `b_T(·, y_T)` (both as logs) and the quadrature policy.
#[derive(Clone)]
pub struct FunctionClassSpec {
    pub log_h_plus: LogFn,
    pub log_emission: LogFn,
    pub class: ClassKind,
    /// Half-width of the first domain; later domains double it.
    pub base_half_width: f64,
    pub doublings: usize,
    pub spacing: f64,
}

impl FunctionClassSpec {
    pub fn new(
        log_h_plus: impl Fn(f64) -> f64 + Send + Sync + 'static,
        log_emission: impl Fn(f64) -> f64 + Send + Sync + 'static,
        class: ClassKind,
    ) -> Result<Self> {
        if let ClassKind::Subexponential { alpha } = class {
            if !(alpha > 0.0 && alpha < 0.5) {
                return Err(Error::InvalidParameter(format!(
                    "alpha = {alpha} must lie in (0, 1/2)"
                )));
            }
        }
        Ok(FunctionClassSpec {
            log_h_plus: Arc::new(log_h_plus),
            log_emission: Arc::new(log_emission),
            class,
            base_half_width: 8.0,
            doublings: 6,
            spacing: 0.01,
        })
    }

    /// `h⁺(x) = C e^{−x²/2 + M|x|}` with a constant emission slice.
    pub fn gaussian_tail(c: f64, m: f64, class: ClassKind) -> Result<Self> {
        let log_c = c.ln();
        Self::new(
            move |x: f64| log_c - 0.5 * x * x + m * x.abs(),
            |_| 0.0,
            class,
        )
    }

    /// `log ∫_{−L}^{L} e^{β|ψ|^p} h⁺ b dx` by the trapezoid rule in log space.
    fn log_integral(&self, psi: &dyn Fn(f64) -> f64, beta: f64, half_width: f64) -> f64 {
        let p = self.class.exponent();
        let n = (2.0 * half_width / self.spacing).ceil() as usize;
        let h = 2.0 * half_width / n as f64;
        let mut terms = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let x = -half_width + i as f64 * h;
            let base = (self.log_h_plus)(x) + (self.log_emission)(x);
            if base == f64::NEG_INFINITY {
                continue;
            }
            let lift = beta * psi(x).abs().powf(p);
            let end = if i == 0 || i == n { 0.5f64.ln() } else { 0.0 };
            let v = lift + base + end;
            if v.is_nan() || v == f64::INFINITY {
                return f64::INFINITY;
            }
            terms.push(v);
        }
        log_sum_exp(terms) + h.ln()
    }

    fn test_beta(&self, psi: &dyn Fn(f64) -> f64, beta: f64) -> (Finiteness, Vec<f64>) {
        let logs: Vec<f64> = (0..=self.doublings)
            .map(|k| self.log_integral(psi, beta, self.base_half_width * 2f64.powi(k as i32)))
            .collect();
        let k = logs.len();
        if logs.contains(&f64::INFINITY) {
            return (Finiteness::Divergent, logs);
        }
        let last = logs[k - 1] - logs[k - 2];
        let before = logs[k - 2] - logs[k - 3];
        let verdict = if last < 1e-9 {
            Finiteness::Finite
        } else if last > 0.1 && last >= 0.5 * before {
            Finiteness::Divergent
        } else {
            Finiteness::Ambiguous
        };
        (verdict, logs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Finiteness {
    Finite,
    Divergent,
    Ambiguous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassVerdict {
    Member,
    NonMember,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Membership {
    pub verdict: ClassVerdict,
    /// For `E_T`: a β with a finite integral. For `E_T^α`: the largest β tested if a member,
    /// the first divergent β otherwise.
    pub witness_beta: Option<f64>,
    /// `(β, [log integral over each domain])` in the order tested.
    pub trace: Vec<(f64, Vec<f64>)>,
}

/// Numerical verdict on `ψ ∈ E_T` or `ψ ∈ E_T^α` from integrals over expanding domains.
pub fn class_membership(spec: &FunctionClassSpec, psi: impl Fn(f64) -> f64) -> Membership {
    let mut trace = Vec::new();
    match spec.class {
        ClassKind::Exponential => {
            let mut ambiguous = false;
            for k in 0..=10 {
                let beta = 2f64.powi(-k);
                let (f, logs) = spec.test_beta(&psi, beta);
                trace.push((beta, logs));
                match f {
                    Finiteness::Finite => {
                        return Membership {
                            verdict: ClassVerdict::Member,
                            witness_beta: Some(beta),
                            trace,
                        }
                    }
                    Finiteness::Ambiguous => ambiguous = true,
                    Finiteness::Divergent => {}
                }
            }
            Membership {
                verdict: if ambiguous {
                    ClassVerdict::Inconclusive
                } else {
                    ClassVerdict::NonMember
                },
                witness_beta: None,
                trace,
            }
        }
        ClassKind::Subexponential { .. } => {
            let mut ambiguous = false;
            let mut largest = None;
            for k in 0..=4 {
                let beta = 2f64.powi(k);
                let (f, logs) = spec.test_beta(&psi, beta);
                trace.push((beta, logs));
                match f {
                    Finiteness::Divergent => {
                        return Membership {
                            verdict: ClassVerdict::NonMember,
                            witness_beta: Some(beta),
                            trace,
                        }
                    }
                    Finiteness::Ambiguous => ambiguous = true,
                    Finiteness::Finite => largest = Some(beta),
                }
            }
            Membership {
                verdict: if ambiguous {
                    ClassVerdict::Inconclusive
                } else {
                    ClassVerdict::Member
                },
                witness_beta: largest,
                trace,
            }
        }
    }
}

/// `ψ^c = ψ 1{|ψ| < c}` and the remainder `ψ̄^c = ψ − ψ^c`.
pub fn truncate<F>(psi: F, c: f64) -> (impl Fn(f64) -> f64, impl Fn(f64) -> f64)
where
    F: Fn(f64) -> f64 + Clone,
{
    let kept = psi.clone();
    (
        move |x| {
            let v = kept(x);
            if v.abs() < c {
                v
            } else {
                0.0
            }
        },
        move |x| {
            let v = psi(x);
            if v.abs() < c {
                0.0
            } else {
                v
            }
        },
    )
}

/// [`truncate`] on node values.
pub fn truncate_values(values: &[f64], c: f64) -> (Vec<f64>, Vec<f64>) {
    values
        .iter()
        .map(|&v| if v.abs() < c { (v, 0.0) } else { (0.0, v) })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(class: ClassKind) -> FunctionClassSpec {
        FunctionClassSpec::gaussian_tail(1.0, 2.0, class).unwrap()
    }

    #[test]
    fn quadratic_functions_are_exponential_members_below_one_half() {
        let m = class_membership(&spec(ClassKind::Exponential), |x| x * x);
        assert_eq!(m.verdict, ClassVerdict::Member);
        assert!(m.witness_beta.unwrap() < 0.5);
    }

    #[test]
    fn log_plus_is_a_member() {
        let m = class_membership(&spec(ClassKind::Exponential), |x: f64| {
            x.abs().ln().max(0.0)
        });
        assert_eq!(m.verdict, ClassVerdict::Member);
        assert_eq!(m.witness_beta, Some(1.0));
    }

    #[test]
    fn gaussian_exponential_is_not_a_member() {
        let m = class_membership(&spec(ClassKind::Exponential), |x: f64| (x * x).exp());
        assert_eq!(m.verdict, ClassVerdict::NonMember);
    }

    #[test]
    fn subexponential_class() {
        let alpha = 0.25;
        let p = 4.0 * alpha / (1.0 + 2.0 * alpha);
        assert!(p > 0.0 && p < 1.0);
        let s = spec(ClassKind::Subexponential { alpha });
        assert_eq!(
            class_membership(&s, |x| x * x).verdict,
            ClassVerdict::Member
        );
        // |ψ|^p grows like x^{2 + ε}: beats the Gaussian tail for every β
        let steep = move |x: f64| x.abs().powf(2.2 / p);
        assert_eq!(class_membership(&s, steep).verdict, ClassVerdict::NonMember);
        assert!(FunctionClassSpec::gaussian_tail(
            1.0,
            2.0,
            ClassKind::Subexponential { alpha: 0.6 }
        )
        .is_err());
    }

    #[test]
    fn truncation_splits_psi() {
        let (kept, rest) = truncate(|x: f64| x * x, 4.0);
        assert_eq!(kept(1.5), 2.25);
        assert_eq!(kept(2.0), 0.0);
        assert_eq!(rest(2.5), 6.25);
        for x in [-3.0, -1.0, 0.0, 1.9, 2.0, 7.0] {
            assert_eq!(kept(x) + rest(x), x * x);
            assert!(kept(x).abs() <= 4.0);
        }
        let (k, r) = truncate_values(&[0.5, -3.0, 9.0], 1.0);
        assert_eq!((k, r), (vec![0.5, 0.0, 0.0], vec![0.0, -3.0, 9.0]));
        let (_, none) = truncate(|x: f64| x.sin(), 2.0);
        assert!((0..100).all(|i| none(i as f64 * 0.1) == 0.0));
    }
}
