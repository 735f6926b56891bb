//! One-dimensional quadrature: trapezoid grids and Gauss–Hermite rules.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scheme {
    /// Trapezoid rule on `[-half_width, half_width]`.
    Grid { half_width: f64 },
    /// Gauss–Hermite rule rescaled to `x = center + scale * z`; `scale = √2`
    /// integrates Gaussian-weighted integrands with unit variance exactly.
    GaussHermite { center: f64, scale: f64 },
}

impl Scheme {
    pub fn standard_gauss_hermite() -> Self {
        Scheme::GaussHermite {
            center: 0.0,
            scale: std::f64::consts::SQRT_2,
        }
    }
}

/// Integrate `f` over the real line with `order` nodes.
pub fn quadrature_integrate(f: impl Fn(f64) -> f64, scheme: Scheme, order: usize) -> Result<f64> {
    match scheme {
        Scheme::Grid { half_width } => {
            if order < 2 {
                return Err(Error::InvalidParameter(
                    "trapezoid rule needs at least 2 nodes".into(),
                ));
            }
            let h = 2.0 * half_width / (order - 1) as f64;
            let mut acc = 0.0;
            for i in 0..order {
                let x = -half_width + i as f64 * h;
                let v = f(x);
                if !v.is_finite() {
                    return Err(Error::NonFiniteIntegrand { index: i, x });
                }
                let w = if i == 0 || i == order - 1 { 0.5 * h } else { h };
                acc += w * v;
            }
            Ok(acc)
        }
        Scheme::GaussHermite { center, scale } => {
            let rule = gauss_hermite(order)?;
            let mut acc = 0.0;
            for (i, (z, w)) in rule.iter().enumerate() {
                let x = center + scale * z;
                let v = f(x);
                if !v.is_finite() {
                    return Err(Error::NonFiniteIntegrand { index: i, x });
                }
                if v != 0.0 {
                    // w * e^{z²} can overflow on its own; combine in log space
                    acc += v * (w.ln() + z * z).exp();
                }
            }
            Ok(scale * acc)
        }
    }
}

/// Nodes and weights for `∫ e^{-z²} g(z) dz ≈ Σ w_i g(z_i)`, ascending in `z`.
pub fn gauss_hermite(n: usize) -> Result<Vec<(f64, f64)>> {
    if n == 0 || n > 400 {
        return Err(Error::InvalidParameter(format!(
            "Gauss–Hermite order {n} out of range 1..=400"
        )));
    }
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        // asymptotic starting guesses for the largest roots, then reuse neighbours
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    let mut rule: Vec<(f64, f64)> = nodes.into_iter().zip(weights).collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(rule)
}
