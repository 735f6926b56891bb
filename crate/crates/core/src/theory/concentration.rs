use serde::Serialize;

/// One row of the `α(t), β(t)` recursion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConcentrationRow {
    pub t: usize,
    pub alpha: f64,
    pub beta: f64,
}

/// `α(0) = β(0) = 2`, `α(t) = 4 max(1, α(t−1))`, `β(t) = max(8, 16 β(t−1) γ_t² / κ_t²)`.
///
/// `gammas[t - 1]` and `kappas[t - 1]` hold `γ_t, κ_t`; returns rows `t = 0..=T`.
pub fn concentration_constants(gammas: &[f64], kappas: &[f64]) -> Vec<ConcentrationRow> {
    let mut rows = vec![ConcentrationRow {
        t: 0,
        alpha: 2.0,
        beta: 2.0,
    }];
    for (i, (g, k)) in gammas.iter().zip(kappas).enumerate() {
        let prev = rows[i];
        rows.push(ConcentrationRow {
            t: i + 1,
            alpha: 4.0 * prev.alpha.max(1.0),
            beta: (16.0 * prev.beta * g * g / (k * k)).max(8.0),
        });
    }
    rows
}

/// `α exp(−N ε² / (β ‖ψ‖∞²))`, clipped to `[0, 1]`.
pub fn concentration_bound(n: usize, epsilon: f64, sup_norm: f64, alpha: f64, beta: f64) -> f64 {
    let exponent = n as f64 * epsilon * epsilon / (beta * sup_norm * sup_norm);
    let raw = alpha * (-exponent).exp();
    if raw.is_nan() {
        1.0
    } else {
        raw.clamp(0.0, 1.0)
    }
}
