//! Mean absorption time of the clamped FC statistic under pure noise.
//!
//! `F_k = min(0, F_{k−1} + S_k)` with i.i.d. `S_k`, absorbed once `F_k < −β`.
//! The mean absorption time `L(s)` from state `s ∈ [−β, 0]` solves
//! `L(s) = 1 + P(S > −s)·L(0) + ∫_{−β}^{0} L(u) f_S(u − s) du`,
//! discretised on a uniform grid and solved directly. The kernel is integrated
//! exactly against a piecewise-linear `L` (product integration), so every row
//! conserves probability mass; plain trapezoid weights do not, and the error
//! is amplified by the near-singular system when absorption is rare.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::distributions::GaussianModel;
use crate::error::{invalid, numeric, Result};

pub const DEFAULT_GRID: usize = 400;
/// Largest relative change in `L(0)` tolerated when the grid is doubled.
pub const GRID_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FredholmSolution {
    /// Mean number of slots until the first false crossing.
    pub l0: f64,
    /// False-crossing rate `1/L(0)`.
    pub lambda: f64,
    pub grid: usize,
    /// Relative change in `L(0)` on the doubled grid.
    pub grid_change: f64,
}

/// `L(0)` and `λ_β = 1/L(0)` on the default grid, with the doubling check.
pub fn fredholm_lambda(beta: f64, increment: &GaussianModel) -> Result<FredholmSolution> {
    fredholm_lambda_with(beta, increment, DEFAULT_GRID)
}

pub fn fredholm_lambda_with(beta: f64, increment: &GaussianModel, grid: usize) -> Result<FredholmSolution> {
    let l0 = solve_l0(beta, increment, grid)?;
    let fine = solve_l0(beta, increment, 2 * grid - 1)?;
    let grid_change = (fine - l0).abs() / fine;
    if grid_change >= GRID_TOLERANCE {
        return Err(numeric(format!(
            "Nyström solution not grid-stable: L(0) = {l0} on {grid} points, {fine} on {} points",
            2 * grid - 1
        )));
    }
    Ok(FredholmSolution { l0, lambda: 1.0 / l0, grid, grid_change })
}

/// `L(0)` on an `n`-point uniform grid over `[−β, 0]`.
pub fn solve_l0(beta: f64, increment: &GaussianModel, n: usize) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid(format!("beta must be positive, got {beta}")));
    }
    if n < 3 {
        return Err(invalid("Nyström grid needs at least three points"));
    }
    increment.validate()?;
    let h = beta / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| -beta + i as f64 * h).collect();
    let top = n - 1;
    let sd = increment.std_dev();
    let mut a = DMatrix::<f64>::identity(n, n);
    for (i, &s) in grid.iter().enumerate() {
        // X = u − s ~ increment; on [u_j, u_{j+1}] split the mass between ends
        let mut prev_cdf = increment.cdf(grid[0] - s);
        let mut prev_pdf = increment.pdf(grid[0] - s);
        for j in 0..top {
            let (xa, xb) = (grid[j] - s, grid[j + 1] - s);
            let cdf_b = increment.cdf(xb);
            let pdf_b = increment.pdf(xb);
            let mass = cdf_b - prev_cdf;
            // ∫ (x − xa) f(x) dx over [xa, xb]
            let first = (increment.mean - xa) * mass - sd * sd * (pdf_b - prev_pdf);
            let right = (first / h).clamp(0.0, mass);
            a[(i, j)] -= mass - right;
            a[(i, j + 1)] -= right;
            prev_cdf = cdf_b;
            prev_pdf = pdf_b;
        }
        a[(i, top)] -= 1.0 - increment.cdf(-s);
    }
    let rhs = DVector::from_element(n, 1.0);
    let sol = a.lu().solve(&rhs).ok_or_else(|| numeric("singular Nyström system"))?;
    let l0 = sol[top];
    if !(l0.is_finite() && l0 >= 1.0 - 1e-9) {
        return Err(numeric(format!("Nyström solution gave L(0) = {l0}")));
    }
    Ok(l0)
}

/// Law of the clamped-side FC increment under pure noise,
/// `(2μ0(Y − m) + μ0²)/(2σ²)` with `Y ~ N(m, σ²)`.
pub fn noise_increment_law(mu0: f64, fc_noise: &GaussianModel) -> GaussianModel {
    let v = fc_noise.variance;
    GaussianModel { mean: mu0 * mu0 / (2.0 * v), variance: mu0 * mu0 / v }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Density;
    use crate::rng::trial_rng;

    fn n(m: f64, v: f64) -> GaussianModel {
        GaussianModel::new(m, v).unwrap()
    }

    #[test]
    fn immediate_absorption() {
        let s = fredholm_lambda(3.0, &n(-1000.0, 1e-2)).unwrap();
        assert!((s.l0 - 1.0).abs() < 1e-9 && (s.lambda - 1.0).abs() < 1e-9, "{s:?}");
    }

    #[test]
    fn matches_reflected_walk_simulation() {
        let law = n(0.5, 1.0);
        let sol = fredholm_lambda(5.0, &law).unwrap();
        let mut rng = trial_rng(31, 0);
        let paths = 100_000;
        let mut total = 0u64;
        for _ in 0..paths {
            let (mut f, mut k) = (0.0f64, 0u64);
            loop {
                k += 1;
                f = (f + law.sample(&mut rng)).min(0.0);
                if f < -5.0 {
                    break;
                }
            }
            total += k;
        }
        let mc = total as f64 / paths as f64;
        assert!((sol.l0 - mc).abs() / mc < 0.05, "L(0) {} vs simulated {mc}", sol.l0);
    }

    #[test]
    fn rate_decreases_with_beta() {
        let law = n(0.1, 0.2);
        let rates: Vec<f64> = [2.0, 4.0, 6.0, 8.0].iter().map(|&b| fredholm_lambda(b, &law).unwrap().lambda).collect();
        assert!(rates.windows(2).all(|w| w[1] < w[0]), "{rates:?}");
    }

    #[test]
    fn grid_stable() {
        let s = fredholm_lambda(8.0, &n(0.1, 0.2)).unwrap();
        assert!(s.grid_change < GRID_TOLERANCE);
        assert!(solve_l0(-1.0, &n(0.1, 0.2), 100).is_err());
    }

    #[test]
    fn noise_increment_moments() {
        let law = noise_increment_law(1.0, &n(0.0, 5.0));
        assert!((law.mean - 0.1).abs() < 1e-15 && (law.variance - 0.2).abs() < 1e-15);
    }
}
