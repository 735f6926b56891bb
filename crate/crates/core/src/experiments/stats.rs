//! Summary statistics over replications. Every function here is a pure fold over
//! its input, so the result does not depend on the order replications finished in
//! beyond the caller's own index ordering.

use statrs::distribution::{ContinuousCDF, Normal};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Wilson score interval for `hits` successes out of `trials`.
pub fn wilson_interval(hits: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if hits == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let hi = if hits == trials {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo.min(p), hi.max(p))
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Linear-interpolation quantile of unsorted data; `NaN` for empty input.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Delete-a-group jackknife: `(estimate on all data, standard error)` with `groups`
/// contiguous blocks.
pub fn jackknife(values: &[f64], groups: usize, stat: impl Fn(&[f64]) -> f64) -> (f64, f64) {
    let full = stat(values);
    let g = groups.min(values.len());
    if g < 2 {
        return (full, f64::NAN);
    }
    let bounds: Vec<usize> = (0..=g).map(|k| k * values.len() / g).collect();
    let leave_out: Vec<f64> = (0..g)
        .map(|k| {
            let mut rest = values[..bounds[k]].to_vec();
            rest.extend_from_slice(&values[bounds[k + 1]..]);
            stat(&rest)
        })
        .collect();
    let m = mean(&leave_out);
    let gf = g as f64;
    let var = (gf - 1.0) / gf * leave_out.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    (full, var.sqrt())
}

/// `z` with `2 (1 − Φ(z)) = p`.
pub fn two_sided_normal_quantile(p: f64) -> f64 {
    let std = Normal::standard();
    std.inverse_cdf(1.0 - 0.5 * p.clamp(0.0, 1.0))
}
