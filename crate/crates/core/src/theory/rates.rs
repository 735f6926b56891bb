use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff of the pseudo-inverse.
const EIGEN_CUTOFF: f64 = 1e-12;
/// Tolerated component of `x` outside the range of `V`, relative to `|x|`.
const RANGE_TOLERANCE: f64 = 1e-9;

/// `I_T(x) = sup_λ {⟨x, λ⟩ − ½⟨λ, V λ⟩}`: `½⟨x, V⁺x⟩` on the range of `V`, `+∞` off it.
#[allow(non_snake_case)]
pub fn rate_I(v: &DMatrix<f64>, x: &[f64]) -> Result<f64> {
    if v.nrows() != v.ncols() || v.nrows() != x.len() {
        return Err(Error::Dimension(format!(
            "matrix is {}x{}, vector has {} entries",
            v.nrows(),
            v.ncols(),
            x.len()
        )));
    }
    let eig = SymmetricEigen::new(v.clone());
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let mut value = 0.0;
    let mut off_range = 0.0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        let c: f64 = eig
            .eigenvectors
            .column(k)
            .iter()
            .zip(x)
            .map(|(e, a)| e * a)
            .sum();
        if top > 0.0 && lambda > EIGEN_CUTOFF * top {
            value += c * c / lambda;
        } else {
            off_range += c * c;
        }
    }
    if off_range.sqrt() > RANGE_TOLERANCE * norm {
        return Ok(f64::INFINITY);
    }
    Ok(0.5 * value)
}

/// A piecewise-linear path on `[0, 1]` with `f(0) = 0`, held constant after its last breakpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct PathFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl PathFunction {
    /// `breakpoints` must start at 0, increase strictly and stay in `[0, 1]`; `values[0]` must be 0.
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != values.len() || breakpoints.len() < 2 {
            return Err(Error::Dimension(
                "need matching breakpoints and values, at least two".into(),
            ));
        }
        if breakpoints[0] != 0.0 || values[0] != 0.0 {
            return Err(Error::InvalidParameter("a path starts at f(0) = 0".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) || *breakpoints.last().unwrap() > 1.0 {
            return Err(Error::InvalidParameter(
                "breakpoints must increase strictly within [0, 1]".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("path values must be finite".into()));
        }
        Ok(PathFunction {
            breakpoints,
            values,
        })
    }

    /// `u ↦ x u`.
    pub fn linear(x: f64) -> Self {
        PathFunction {
            breakpoints: vec![0.0, 1.0],
            values: vec![0.0, x],
        }
    }

    /// Rises linearly to `x` at `u = knee` and stays there.
    pub fn ramp(x: f64, knee: f64) -> Result<Self> {
        PathFunction::new(vec![0.0, knee, 1.0], vec![0.0, x, x])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, u: f64) -> f64 {
        let b = &self.breakpoints;
        if u >= *b.last().unwrap() {
            return *self.values.last().unwrap();
        }
        if u <= 0.0 {
            return 0.0;
        }
        let k = b.partition_point(|&v| v <= u) - 1;
        let w = (u - b[k]) / (b[k + 1] - b[k]);
        self.values[k] + w * (self.values[k + 1] - self.values[k])
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// `J_T(f) = ∫₀¹ ḟ²/(2σ²) du + (f(1)²/2)(1/V − 1/σ²)`.
#[allow(non_snake_case)]
pub fn rate_J(sigma_sq: f64, v: f64, f: &PathFunction) -> f64 {
    if sigma_sq <= 0.0 {
        return if f.is_zero() { 0.0 } else { f64::INFINITY };
    }
    let energy: f64 = f
        .breakpoints
        .windows(2)
        .zip(f.values.windows(2))
        .map(|(u, x)| (x[1] - x[0]).powi(2) / (u[1] - u[0]))
        .sum();
    let end = *f.values.last().unwrap();
    energy / (2.0 * sigma_sq) + 0.5 * end * end * (1.0 / v - 1.0 / sigma_sq)
}

/// `J_T^U(x) = Σ (x_i − x_{i-1})²/(2(u_i − u_{i-1})σ²) + (1/V − 1/σ²) x_m²/2` for
/// `U = {0 < u_1 < .. < u_m ≤ 1}` (pass `u_1..u_m`).
#[allow(non_snake_case)]
pub fn rate_J_finite(sigma_sq: f64, v: f64, u: &[f64], x: &[f64]) -> Result<f64> {
    check_subdivision(u, x.len())?;
    if sigma_sq <= 0.0 {
        return Ok(if x.iter().all(|&a| a == 0.0) {
            0.0
        } else {
            f64::INFINITY
        });
    }
    let mut prev = (0.0, 0.0);
    let mut energy = 0.0;
    for (&ui, &xi) in u.iter().zip(x) {
        energy += (xi - prev.1).powi(2) / (ui - prev.0);
        prev = (ui, xi);
    }
    let end = prev.1;
    Ok(energy / (2.0 * sigma_sq) + 0.5 * end * end * (1.0 / v - 1.0 / sigma_sq))
}

/// Limiting log-moment generating function of the increments of the path process over `U`:
/// `½ Σ Δu_i λ_i² σ² + ½ (V − σ²) (Σ λ_i Δu_i)²`.
pub fn log_mgf_finite(sigma_sq: f64, v: f64, u: &[f64], lambda: &[f64]) -> Result<f64> {
    check_subdivision(u, lambda.len())?;
    let mut prev = 0.0;
    let (mut a, mut b) = (0.0, 0.0);
    for (&ui, &l) in u.iter().zip(lambda) {
        let du = ui - prev;
        a += du * l * l;
        b += du * l;
        prev = ui;
    }
    Ok(0.5 * a * sigma_sq + 0.5 * (v - sigma_sq) * b * b)
}

/// Legendre transform of [`log_mgf_finite`] in increment coordinates `z_i = x_i − x_{i-1}`:
/// `Σ z_i²/(2Δu_i σ²) − c (Σ z_i)² / (2σ²(σ² + c u_m))` with `c = V − σ²`.
pub fn rate_increments(sigma_sq: f64, v: f64, u: &[f64], z: &[f64]) -> Result<f64> {
    check_subdivision(u, z.len())?;
    if sigma_sq <= 0.0 {
        return Err(Error::InvalidParameter(
            "increment rate needs sigma^2 > 0".into(),
        ));
    }
    let c = v - sigma_sq;
    let mut prev = 0.0;
    let mut a = 0.0;
    for (&ui, &zi) in u.iter().zip(z) {
        a += zi * zi / (ui - prev);
        prev = ui;
    }
    let s: f64 = z.iter().sum();
    Ok(a / (2.0 * sigma_sq) - c * s * s / (2.0 * sigma_sq * (sigma_sq + c * prev)))
}

fn check_subdivision(u: &[f64], len: usize) -> Result<()> {
    if u.len() != len || u.is_empty() {
        return Err(Error::Dimension(format!(
            "{} subdivision points for {len} values",
            u.len()
        )));
    }
    let mut prev = 0.0;
    for &ui in u {
        if !(ui > prev) || ui > 1.0 {
            return Err(Error::InvalidParameter(format!(
                "subdivision point {ui} is out of order"
            )));
        }
        prev = ui;
    }
    Ok(())
}

/// The minimiser of `J_T` over paths on a uniform grid and its value.
#[derive(Clone, Debug, PartialEq)]
pub struct PathRate {
    pub value: f64,
    /// Path values at `u_i = i / cells`, `i = 0..=cells`.
    pub nodes: Vec<f64>,
}

impl PathRate {
    pub fn path(&self) -> PathFunction {
        let m = self.nodes.len() - 1;
        PathFunction {
            breakpoints: (0..=m).map(|i| i as f64 / m as f64).collect(),
            values: self.nodes.clone(),
        }
    }
}

/// Tridiagonal Hessian of `J_T` in the node values `f(u_1), .., f(u_m)` on a uniform grid.
fn path_hessian(sigma_sq: f64, v: f64, cells: usize) -> (Vec<f64>, Vec<f64>) {
    let k = cells as f64 / sigma_sq;
    let mut diag = vec![2.0 * k; cells];
    diag[cells - 1] = k + (1.0 / v - 1.0 / sigma_sq);
    (diag, vec![-k; cells - 1])
}

fn minimize_path(sigma_sq: f64, v: f64, cells: usize, lo: &[f64], hi: &[f64]) -> Result<PathRate> {
    if cells == 0 {
        return Err(Error::InvalidParameter("need at least one cell".into()));
    }
    if !(sigma_sq > 0.0 && v > 0.0) {
        return Err(Error::InvalidParameter(
            "path minimisation needs sigma^2 > 0 and V > 0".into(),
        ));
    }
    let (diag, off) = path_hessian(sigma_sq, v, cells);
    let z = minimize_box_qp(&diag, &off, &vec![0.0; cells], lo, hi)?;
    let mut nodes = vec![0.0];
    nodes.extend(z);
    let f = PathRate { value: 0.0, nodes };
    let value = rate_J(sigma_sq, v, &f.path());
    Ok(PathRate { value, ..f })
}

/// `min { J_T(f) : f(1) = x }` over piecewise-linear paths with `cells` uniform cells.
pub fn contraction_minimum(sigma_sq: f64, v: f64, x: f64, cells: usize) -> Result<PathRate> {
    let mut lo = vec![f64::NEG_INFINITY; cells];
    let mut hi = vec![f64::INFINITY; cells];
    lo[cells - 1] = x;
    hi[cells - 1] = x;
    minimize_path(sigma_sq, v, cells, &lo, &hi)
}

/// `inf { J_T(g) : ‖g − f‖_∞ ≤ η }` over piecewise-linear `g` with `cells` uniform cells.
pub fn tube_minimum(
    sigma_sq: f64,
    v: f64,
    f: &PathFunction,
    eta: f64,
    cells: usize,
) -> Result<PathRate> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(
            "tube radius must be positive".into(),
        ));
    }
    if sigma_sq <= 0.0 {
        // only the zero path has finite rate
        let inside = (0..=cells).all(|i| f.eval(i as f64 / cells as f64).abs() <= eta);
        return Ok(PathRate {
            value: if inside { 0.0 } else { f64::INFINITY },
            nodes: vec![0.0; cells + 1],
        });
    }
    let centre: Vec<f64> = (1..=cells)
        .map(|i| f.eval(i as f64 / cells as f64))
        .collect();
    let lo: Vec<f64> = centre.iter().map(|c| c - eta).collect();
    let hi: Vec<f64> = centre.iter().map(|c| c + eta).collect();
    minimize_path(sigma_sq, v, cells, &lo, &hi)
}

/// Minimise `½ zᵀHz − gᵀz` subject to `lo ≤ z ≤ hi` for a symmetric tridiagonal
/// positive definite `H` (`diag`, `off`), by a primal-dual active set iteration.
pub fn minimize_box_qp(
    diag: &[f64],
    off: &[f64],
    g: &[f64],
    lo: &[f64],
    hi: &[f64],
) -> Result<Vec<f64>> {
    let m = diag.len();
    if off.len() + 1 != m || g.len() != m || lo.len() != m || hi.len() != m {
        return Err(Error::Dimension("inconsistent box QP dimensions".into()));
    }
    if lo.iter().zip(hi).any(|(l, h)| l > h) {
        return Err(Error::InvalidParameter("empty box".into()));
    }
    let c = diag.iter().copied().fold(0.0, f64::max).max(1.0);
    let mut z: Vec<f64> = (0..m).map(|i| 0.0f64.clamp(lo[i], hi[i])).collect();
    let mut mu = vec![0.0; m];
    // 0 free, 1 at lower, 2 at upper
    let mut state = vec![u8::MAX; m];
    for _ in 0..(4 * m + 50) {
        let next: Vec<u8> = (0..m)
            .map(|i| {
                let probe = z[i] + mu[i] / c;
                if lo[i] == hi[i] || probe < lo[i] {
                    1
                } else if probe > hi[i] {
                    2
                } else {
                    0
                }
            })
            .collect();
        if next == state {
            return Ok(z);
        }
        state = next;
        for i in 0..m {
            match state[i] {
                1 => z[i] = lo[i],
                2 => z[i] = hi[i],
                _ => {}
            }
        }
        let free: Vec<usize> = (0..m).filter(|&i| state[i] == 0).collect();
        if !free.is_empty() {
            let rhs: Vec<f64> = free
                .iter()
                .map(|&i| {
                    let mut r = g[i];
                    if i > 0 && state[i - 1] != 0 {
                        r -= off[i - 1] * z[i - 1];
                    }
                    if i + 1 < m && state[i + 1] != 0 {
                        r -= off[i] * z[i + 1];
                    }
                    r
                })
                .collect();
            let d: Vec<f64> = free.iter().map(|&i| diag[i]).collect();
            let e: Vec<f64> = free
                .windows(2)
                .map(|w| if w[1] == w[0] + 1 { off[w[0]] } else { 0.0 })
                .collect();
            for (&i, v) in free.iter().zip(solve_tridiagonal(&d, &e, &rhs)?) {
                z[i] = v;
            }
        }
        for i in 0..m {
            mu[i] = if state[i] == 0 {
                0.0
            } else {
                let mut hz = diag[i] * z[i];
                if i > 0 {
                    hz += off[i - 1] * z[i - 1];
                }
                if i + 1 < m {
                    hz += off[i] * z[i + 1];
                }
                g[i] - hz
            };
        }
    }
    Err(Error::InvalidParameter(
        "active set iteration did not settle".into(),
    ))
}

/// Thomas algorithm for a symmetric tridiagonal system.
fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(Error::InvalidParameter(
            "singular tridiagonal system".into(),
        ));
    }
    d[0] = rhs[0] / denom;
    for i in 1..n {
        c[i - 1] = off[i - 1] / denom;
        denom = diag[i] - off[i - 1] * c[i - 1];
        if denom == 0.0 {
            return Err(Error::InvalidParameter(
                "singular tridiagonal system".into(),
            ));
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}
