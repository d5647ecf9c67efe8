//! Error-probability series: an FC false crossing before the first node
//! transmits.

use serde::Serialize;

use super::fredholm::{fredholm_lambda, noise_increment_law, FredholmSolution};
use super::node_passages;
use crate::distributions::{std_normal_cdf, Hypothesis, PassageDistribution};
use crate::error::{invalid, numeric, Error, Result};
use crate::quadrature::GaussLegendre;
use crate::scenario::Scenario;

/// Series truncation target for P(no node has transmitted by k).
pub const TAIL_TARGET: f64 = 1e-6;
const K_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PmdBounds {
    pub lower: f64,
    pub upper: f64,
    pub k_max: u64,
    /// P(no transmission by k_max); bounds the ignored remainder.
    pub tail: f64,
}

/// P(t_1 > k) under independent Gaussian passage laws.
pub fn silence_probability(dists: &[PassageDistribution], k: f64) -> f64 {
    dists.iter().map(|d| 1.0 - d.cdf(k)).product()
}

fn auto_k_max(dists: &[PassageDistribution]) -> Option<u64> {
    let mut k = 1u64;
    while k <= K_CAP {
        if silence_probability(dists, k as f64) < TAIL_TARGET {
            // step back to the first k that qualifies
            let mut lo = k / 2;
            let mut hi = k;
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if silence_probability(dists, mid as f64) < TAIL_TARGET {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi);
        }
        k *= 2;
    }
    None
}

/// Missed-detection bounds for DualSPRT (`H1` true, FC crossing `−β` first).
pub fn dualsprt_pmd_bounds(scenario: &Scenario, beta: f64, k_max: Option<u64>) -> Result<PmdBounds> {
    dualsprt_error_bounds(scenario, Hypothesis::H1, beta, k_max)
}

/// Lower/upper series for the probability that the FC walk exits on the wrong
/// side before the first node transmits. Before that epoch the FC increment is
/// pure noise, `N(0, v)` with `v = (μ1+μ0)²/σ²`; the lower bound uses the
/// reflection estimate `P(min_{n<k} F_n > −β) ≥ 1 − 2P(F_{k−1} ≤ −β)`, the upper
/// bound replaces that factor with `P(F_{k−1} > −β)`.
pub fn dualsprt_error_bounds(
    scenario: &Scenario,
    hypothesis: Hypothesis,
    beta: f64,
    k_max: Option<u64>,
) -> Result<PmdBounds> {
    if !(beta > 0.0) {
        return Err(invalid(format!("beta must be positive, got {beta}")));
    }
    let f = &scenario.fusion;
    if (f.mu1 - f.mu0).abs() > 1e-12 * f.mu1.max(f.mu0) {
        return Err(Error::Unsupported(
            "error-probability series needs a zero-mean pre-transmission FC walk (mu1 = mu0)".into(),
        ));
    }
    let dists: Vec<PassageDistribution> = node_passages(scenario, hypothesis)?.iter().map(|p| p.dist).collect();
    let k_max = match k_max {
        Some(k) => {
            let tail = silence_probability(&dists, k as f64);
            if tail >= TAIL_TARGET {
                return Err(numeric(format!("k_max = {k} leaves P(t1 > k_max) = {tail:e} ≥ {TAIL_TARGET:e}")));
            }
            k
        }
        None => {
            auto_k_max(&dists).ok_or_else(|| numeric("nodes practically never transmit; series does not converge"))?
        }
    };
    let v = f.dual_slope().powi(2) * scenario.channel.fc_noise.variance;
    let sd = v.sqrt();
    let rule = GaussLegendre::new(16);
    let (mut lower, mut upper) = (0.0, 0.0);
    for k in 1..=k_max {
        let silent = silence_probability(&dists, k as f64);
        let (step, low_factor, up_factor) = if k == 1 {
            (std_normal_cdf(-beta / sd), 1.0, 1.0)
        } else {
            let s = ((k - 1) as f64 * v).sqrt();
            let below = std_normal_cdf(-beta / s);
            // P(F_{k−1} > −β, F_{k−1} + ξ < −β) = ∫₀^∞ P(ξ < −c) f_F(−β + c) dc
            let hi = 12.0 * sd;
            let step = rule.integrate_composite(0.0, hi, 8, |c| {
                let z = (c - beta) / s;
                std_normal_cdf(-c / sd) * (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
            });
            (step, (1.0 - 2.0 * below).max(0.0), 1.0 - below)
        };
        lower += step * low_factor * silent;
        upper += step * up_factor * silent;
    }
    Ok(PmdBounds {
        lower: lower.clamp(0.0, 1.0),
        upper: upper.clamp(0.0, 1.0),
        k_max,
        tail: silence_probability(&dists, k_max as f64),
    })
}

/// How the geometric false-crossing law enters the CSPRT series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesForm {
    /// `Σ_k P(first false crossing at k) · P(t1 > k)` with
    /// `P(first crossing at k) = e^{−λ(k−1)} − e^{−λk}`.
    #[default]
    FirstPassageMass,
    /// `Σ_k (1 − e^{−λk}) · P(t1 > k)`; not a probability in general, capped at 1.
    Cumulative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PmdApprox {
    pub value: f64,
    /// The raw series exceeded 1 and was capped.
    pub capped: bool,
    pub k_max: u64,
    pub tail: f64,
}

/// Error probability of the one-sided FC statistic when its false crossings
/// arrive at rate `λ_β` and the first node transmission ends the race.
pub fn csprt_pmd_approx(
    lambda_beta: f64,
    dists: &[PassageDistribution],
    k_max: Option<u64>,
    form: SeriesForm,
) -> Result<PmdApprox> {
    if !(lambda_beta > 0.0) {
        return Err(invalid(format!("lambda_beta must be positive, got {lambda_beta}")));
    }
    let k_max = match k_max.or_else(|| auto_k_max(dists)) {
        Some(k) => k,
        None => {
            log::warn!("series truncated at k = {K_CAP} with P(t1 > k) ≥ {TAIL_TARGET:e}");
            K_CAP
        }
    };
    let tail = silence_probability(dists, k_max as f64);
    if tail >= TAIL_TARGET {
        log::warn!("series truncated at k = {k_max}; P(t1 > k) = {tail:e}");
    }
    let mut raw = 0.0;
    for k in 1..=k_max {
        let kf = k as f64;
        let weight = match form {
            SeriesForm::FirstPassageMass => (-lambda_beta * (kf - 1.0)).exp() - (-lambda_beta * kf).exp(),
            SeriesForm::Cumulative => 1.0 - (-lambda_beta * kf).exp(),
        };
        raw += weight * silence_probability(dists, kf);
    }
    Ok(PmdApprox { value: raw.min(1.0), capped: raw > 1.0, k_max, tail })
}

/// SPRT-CSPRT error probability under `hypothesis` at threshold `beta`: the
/// statistic for the other side runs on pure FC noise until a node transmits.
pub fn csprt_error_approx(
    scenario: &Scenario,
    hypothesis: Hypothesis,
    beta: f64,
    form: SeriesForm,
) -> Result<(FredholmSolution, PmdApprox)> {
    let passages: Vec<_> = node_passages(scenario, hypothesis)?.into_iter().map(|p| p.dist).collect();
    let mu = match hypothesis {
        Hypothesis::H1 => scenario.fusion.mu0,
        Hypothesis::H0 => scenario.fusion.mu1,
    };
    let fredholm = fredholm_lambda(beta, &noise_increment_law(mu, &scenario.channel.fc_noise))?;
    let approx = csprt_pmd_approx(fredholm.lambda, &passages, None, form)?;
    Ok((fredholm, approx))
}
