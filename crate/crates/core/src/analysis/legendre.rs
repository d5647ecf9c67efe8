//! Numeric Legendre transforms of log-MGFs and the rate-inversion diagnostic.

use serde::Serialize;

use crate::distributions::std_normal_cdf;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LegendreRate {
    pub value: f64,
    pub argmax: f64,
    /// The objective was still rising at the edge of the λ range.
    pub unbounded: bool,
}

const LAMBDA_RANGE: f64 = 50.0;
const GRID: usize = 4001;

/// `sup_λ (αλ − log g(λ))` over `λ ∈ [−50, 50]`: grid search then golden
/// section. Points where `log g` is not finite are skipped.
pub fn legendre_rate<F: Fn(f64) -> f64>(alpha: f64, log_mgf: F) -> Result<LegendreRate> {
    let objective = |l: f64| {
        let g = log_mgf(l);
        if g.is_finite() {
            alpha * l - g
        } else {
            f64::NEG_INFINITY
        }
    };
    let step = 2.0 * LAMBDA_RANGE / (GRID - 1) as f64;
    let lambda = |i: usize| -LAMBDA_RANGE + i as f64 * step;
    let (mut best_i, mut best) = (usize::MAX, f64::NEG_INFINITY);
    let mut first_finite = None;
    let mut last_finite = 0;
    for i in 0..GRID {
        let v = objective(lambda(i));
        if v > f64::NEG_INFINITY {
            first_finite.get_or_insert(i);
            last_finite = i;
        }
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let Some(first_finite) = first_finite else {
        return Err(invalid("log-MGF is not finite anywhere on the λ grid"));
    };
    let unbounded = best_i == first_finite && first_finite == 0 || best_i == last_finite && last_finite == GRID - 1;
    let lo = lambda(best_i.saturating_sub(1).max(first_finite));
    let hi = lambda((best_i + 1).min(last_finite));
    let (argmax, value) = golden_max(&objective, lo, hi);
    let (argmax, value) = if value >= best { (argmax, value) } else { (lambda(best_i), best) };
    Ok(LegendreRate { value, argmax, unbounded })
}

fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 * (1.0 + a.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// log E[e^{λX}] for X ~ N(m, v).
pub fn gaussian_log_mgf(m: f64, v: f64) -> impl Fn(f64) -> f64 {
    move |l| m * l + 0.5 * v * l * l
}

/// log E[e^{λ|X|}] for X ~ N(m, v).
pub fn folded_normal_log_mgf(m: f64, v: f64) -> impl Fn(f64) -> f64 {
    let s = v.sqrt();
    move |l| {
        let a = m * l + std_normal_cdf((m + v * l) / s).ln();
        let b = -m * l + std_normal_cdf((-m + v * l) / s).ln();
        let hi = a.max(b);
        0.5 * v * l * l + hi + ((a - hi).exp() + (b - hi).exp()).ln()
    }
}

/// `η / Λ⁻¹(η)` with `Λ⁻¹` taken on the branch above the mean `mean_abs`
/// (the unbounded-support case). Bisection on α.
pub fn s_of_eta<F: Fn(f64) -> f64>(eta: f64, mean_abs: f64, log_mgf: F) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(invalid(format!("eta must be positive, got {eta}")));
    }
    let rate = |a: f64| legendre_rate(a, &log_mgf).map(|r| r.value);
    let mut lo = mean_abs;
    let mut hi = mean_abs + 1.0;
    while rate(hi)? < eta {
        lo = hi;
        hi = mean_abs + 2.0 * (hi - mean_abs);
        if hi > 1e6 {
            return Err(invalid("rate function never reaches eta"));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if rate(mid)? < eta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(eta / (0.5 * (lo + hi)))
}
