//! Observation laws, log-likelihood ratios, divergences and the Gaussian
//! first-passage approximation.
//!
//! Only Gaussian laws are implemented. Everything that consumes a density
//! goes through [`Density`], so another family only has to provide a
//! log-density and a sampler.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// A univariate law that can be evaluated in log-space and sampled.
pub trait Density {
    fn ln_pdf(&self, x: f64) -> f64;
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianModel {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) || !mean.is_finite() {
            return Err(invalid(format!(
                "Gaussian needs finite mean and positive variance, got N({mean}, {variance})"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn standard() -> Self {
        Self { mean: 0.0, variance: 1.0 }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        std_normal_cdf((x - self.mean) / self.std_dev())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// Same law translated by `shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        Self { mean: self.mean + shift, variance: self.variance }
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.mean, self.variance).map(|_| ())
    }
}

impl Density for GaussianModel {
    fn ln_pdf(&self, x: f64) -> f64 {
        let d = x - self.mean;
        -0.5 * (LN_2PI + self.variance.ln() + d * d / self.variance)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean + self.std_dev() * z
    }
}

/// Which hypothesis is true (or being assumed).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

impl Hypothesis {
    pub fn label(self) -> &'static str {
        match self {
            Hypothesis::H0 => "H0",
            Hypothesis::H1 => "H1",
        }
    }

    pub fn other(self) -> Self {
        match self {
            Hypothesis::H0 => Hypothesis::H1,
            Hypothesis::H1 => Hypothesis::H0,
        }
    }
}

/// Per-node pre- and post-change laws with the LLR drift/variance under each
/// hypothesis. The derived fields are private so they can only come from
/// [`HypothesisPair::new`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisPair {
    f0: GaussianModel,
    f1: GaussianModel,
    delta0: f64,
    delta1: f64,
    rho0_sq: f64,
    rho1_sq: f64,
}

impl HypothesisPair {
    pub fn new(f0: GaussianModel, f1: GaussianModel) -> Result<Self> {
        f0.validate()?;
        f1.validate()?;
        let (delta0, rho0_sq) = llr_moments(&f0, &f1, &f0);
        let (delta1, rho1_sq) = llr_moments(&f0, &f1, &f1);
        Ok(Self { f0, f1, delta0, delta1, rho0_sq, rho1_sq })
    }

    pub fn f0(&self) -> &GaussianModel {
        &self.f0
    }

    pub fn f1(&self) -> &GaussianModel {
        &self.f1
    }

    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    pub fn delta1(&self) -> f64 {
        self.delta1
    }

    pub fn rho0_sq(&self) -> f64 {
        self.rho0_sq
    }

    pub fn rho1_sq(&self) -> f64 {
        self.rho1_sq
    }

    /// True when f1 and f0 coincide, so no test can separate them.
    pub fn is_degenerate(&self) -> bool {
        self.f0 == self.f1
    }

    pub fn law(&self, hypothesis: Hypothesis) -> &GaussianModel {
        match hypothesis {
            Hypothesis::H0 => &self.f0,
            Hypothesis::H1 => &self.f1,
        }
    }
}

/// log f1(x) − log f0(x).
pub fn llr(x: f64, pair: &HypothesisPair) -> f64 {
    pair.f1.ln_pdf(x) - pair.f0.ln_pdf(x)
}

/// D(p‖q) for Gaussians.
pub fn kl_divergence(p: &GaussianModel, q: &GaussianModel) -> f64 {
    let dm = p.mean - q.mean;
    if p.variance == q.variance {
        return dm * dm / (2.0 * q.variance);
    }
    let ratio = p.variance / q.variance;
    0.5 * (ratio - 1.0 - ratio.ln() + dm * dm / q.variance)
}

/// Mean and variance of the per-sample LLR increment under `hypothesis`.
pub fn drift_stats(pair: &HypothesisPair, hypothesis: Hypothesis) -> (f64, f64) {
    match hypothesis {
        Hypothesis::H0 => (pair.delta0, pair.rho0_sq),
        Hypothesis::H1 => (pair.delta1, pair.rho1_sq),
    }
}

/// Mean and variance of `llr(X, pair)` when X follows `truth`.
pub fn llr_stats(pair: &HypothesisPair, truth: &GaussianModel) -> (f64, f64) {
    llr_moments(&pair.f0, &pair.f1, truth)
}

// The Gaussian LLR is the quadratic a·x² + b·x + c. With X = m + √v·Z its
// variance is (2am + b)²·v + 2a²v². The mean is taken from the KL closed form
// so that drift and divergence agree exactly.
fn llr_moments(f0: &GaussianModel, f1: &GaussianModel, truth: &GaussianModel) -> (f64, f64) {
    let a = 0.5 * (1.0 / f0.variance - 1.0 / f1.variance);
    let b = f1.mean / f1.variance - f0.mean / f0.variance;
    let (m, v) = (truth.mean, truth.variance);
    let var = (2.0 * a * m + b).powi(2) * v + 2.0 * a * a * v * v;
    let mean = if truth == f1 {
        kl_divergence(f1, f0)
    } else if truth == f0 {
        -kl_divergence(f0, f1)
    } else {
        let c = f1.ln_pdf(0.0) - f0.ln_pdf(0.0);
        a * (m * m + v) + b * m + c
    };
    (mean, var)
}

/// Gaussian law of a threshold-crossing time, in slots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassageDistribution {
    pub mean: f64,
    pub variance: f64,
}

impl PassageDistribution {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(mean > 0.0 && variance > 0.0 && mean.is_finite() && variance.is_finite()) {
            return Err(invalid(format!(
                "passage distribution needs positive mean and variance, got ({mean}, {variance})"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn cdf(&self, t: f64) -> f64 {
        std_normal_cdf((t - self.mean) / self.std_dev())
    }

    pub fn as_gaussian(&self) -> GaussianModel {
        GaussianModel { mean: self.mean, variance: self.variance }
    }
}

/// Renewal-CLT law of the first time a walk with drift `delta` and increment
/// variance `rho_sq` climbs above `gamma`: N(γ/δ, ρ²γ/δ³).
pub fn passage_approx(gamma: f64, delta: f64, rho_sq: f64) -> Result<PassageDistribution> {
    if !(delta > 0.0) {
        return Err(invalid(format!("passage approximation needs positive drift, got {delta}")));
    }
    if !(gamma > 0.0) || !(rho_sq > 0.0) {
        return Err(invalid(format!(
            "passage approximation needs gamma > 0 and rho_sq > 0, got gamma={gamma}, rho_sq={rho_sq}"
        )));
    }
    PassageDistribution::new(gamma / delta, rho_sq * gamma / delta.powi(3))
}

/// E|X| for X ~ N(m, v).
pub fn folded_mean(m: f64, v: f64) -> f64 {
    let s = v.sqrt();
    s * (2.0 / PI).sqrt() * (-m * m / (2.0 * v)).exp() + m * (1.0 - 2.0 * std_normal_cdf(-m / s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;
    use crate::rng::trial_rng;

    fn n(m: f64, v: f64) -> GaussianModel {
        GaussianModel::new(m, v).unwrap()
    }

    fn unit_pair() -> HypothesisPair {
        HypothesisPair::new(n(0.0, 1.0), n(1.0, 1.0)).unwrap()
    }

    #[test]
    fn llr_examples() {
        let pair = unit_pair();
        assert!(llr(0.5, &pair).abs() < 1e-15);
        assert!((llr(1.0, &pair) - 0.5).abs() < 1e-15);
        // fusion-style pair: N(-1, 5) vs N(1, 5) → 2μx/σ²
        let fc = HypothesisPair::new(n(-1.0, 5.0), n(1.0, 5.0)).unwrap();
        assert!((llr(1.0, &fc) - 0.4).abs() < 1e-14);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&n(1.0, 1.0), &n(0.0, 1.0)), 0.5);
        assert_eq!(kl_divergence(&n(0.0, 1.0), &n(0.0, 1.0)), 0.0);
        assert!((kl_divergence(&n(0.84, 1.0), &n(0.0, 1.0)) - 0.3528).abs() < 1e-12);
    }

    #[test]
    fn drift_examples() {
        let pair = unit_pair();
        assert_eq!(drift_stats(&pair, Hypothesis::H1), (0.5, 1.0));
        assert_eq!(drift_stats(&pair, Hypothesis::H0), (-0.5, 1.0));
        let weak = HypothesisPair::new(n(0.0, 1.0), n(0.5, 1.0)).unwrap();
        assert_eq!(drift_stats(&weak, Hypothesis::H1), (0.125, 0.25));
    }

    #[test]
    fn unequal_variance_moments_match_quadrature() {
        let pair = HypothesisPair::new(n(0.0, 0.02), n(1.0, 0.08)).unwrap();
        let rule = GaussLegendre::new(64);
        for h in [Hypothesis::H0, Hypothesis::H1] {
            let law = *pair.law(h);
            let lo = law.mean - 12.0 * law.std_dev();
            let hi = law.mean + 12.0 * law.std_dev();
            let m = rule.integrate_composite(lo, hi, 16, |x| llr(x, &pair) * law.pdf(x));
            let m2 = rule.integrate_composite(lo, hi, 16, |x| llr(x, &pair).powi(2) * law.pdf(x));
            let (d, r) = drift_stats(&pair, h);
            assert!((d - m).abs() < 1e-8 * m.abs().max(1.0), "{h:?} mean {d} vs {m}");
            assert!((r - (m2 - m * m)).abs() < 1e-6 * r, "{h:?} var {r} vs {}", m2 - m * m);
        }
    }

    #[test]
    fn passage_examples() {
        let p = passage_approx(10.0, 1.0, 1.0).unwrap();
        assert_eq!((p.mean, p.variance), (10.0, 10.0));
        let p = passage_approx(10.0, 0.5, 1.0).unwrap();
        assert_eq!((p.mean, p.variance), (20.0, 80.0));
        assert!(passage_approx(10.0, -0.5, 1.0).is_err());
        assert!(passage_approx(10.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn passage_matches_simulated_walks() {
        // delta=0.5, rho²=1; gamma large enough that overshoot stays under 10%
        let (gamma, walks) = (10.0, 100_000u64);
        let mut rng = trial_rng(11, 0);
        let step = n(0.5, 1.0);
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..walks {
            let (mut w, mut k) = (0.0, 0u32);
            while w < gamma {
                w += step.sample(&mut rng);
                k += 1;
            }
            s1 += k as f64;
            s2 += (k as f64).powi(2);
        }
        let mean = s1 / walks as f64;
        let var = s2 / walks as f64 - mean * mean;
        let approx = passage_approx(gamma, 0.5, 1.0).unwrap();
        assert!((mean - approx.mean).abs() / approx.mean < 0.10, "mean {mean}");
        assert!((var - approx.variance).abs() / approx.variance < 0.10, "var {var}");
    }

    #[test]
    fn folded_mean_examples() {
        assert!((folded_mean(0.0, 1.0) - (2.0 / PI).sqrt()).abs() < 1e-12);
        assert!((folded_mean(10.0, 1.0) - 10.0).abs() < 1e-6);
        let law = n(-2.0, 0.8);
        let rule = GaussLegendre::new(64);
        let oracle = rule.integrate_composite(-14.0, 10.0, 48, |x| x.abs() * law.pdf(x));
        assert!((folded_mean(-2.0, 0.8) - oracle).abs() < 1e-6);
    }

    #[test]
    fn empirical_llr_mean_under_h1() {
        let pair = unit_pair();
        let mut rng = trial_rng(5, 1);
        let n_draws = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n_draws {
            let l = llr(pair.f1().sample(&mut rng), &pair);
            s1 += l;
            s2 += l * l;
        }
        let mean = s1 / n_draws as f64;
        let se = ((s2 / n_draws as f64 - mean * mean) / n_draws as f64).sqrt();
        assert!((mean - pair.delta1()).abs() < 4.0 * se);
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(GaussianModel::new(0.0, 0.0).is_err());
        assert!(GaussianModel::new(f64::NAN, 1.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn kl_nonnegative(m1 in -5.0..5.0f64, m2 in -5.0..5.0f64, v1 in 0.05..5.0f64, v2 in 0.05..5.0f64) {
                let k = kl_divergence(&n(m1, v1), &n(m2, v2));
                prop_assert!(k >= -1e-15);
                prop_assert!(kl_divergence(&n(m1, v1), &n(m1, v1)).abs() < 1e-15);
            }

            #[test]
            fn drift_equals_kl(m0 in -3.0..3.0f64, m1 in -3.0..3.0f64, v0 in 0.1..3.0f64, v1 in 0.1..3.0f64) {
                let f0 = n(m0, v0);
                let f1 = n(m1, v1);
                let pair = HypothesisPair::new(f0, f1).unwrap();
                prop_assert_eq!(drift_stats(&pair, Hypothesis::H1).0, kl_divergence(&f1, &f0));
                prop_assert_eq!(drift_stats(&pair, Hypothesis::H0).0, -kl_divergence(&f0, &f1));
            }

            #[test]
            fn passage_mean_times_drift_is_gamma(g in 0.1..100.0f64, d in 0.01..5.0f64, r in 0.01..5.0f64) {
                let p = passage_approx(g, d, r).unwrap();
                prop_assert!((p.mean * d - g).abs() <= 1e-12 * g);
            }
        }
    }
}
