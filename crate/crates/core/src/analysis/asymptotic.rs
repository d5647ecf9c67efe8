//! Large-threshold constants for DualSPRT with binary emissions and Gaussian
//! FC noise.

use serde::Serialize;

use crate::channel::observation_law;
use crate::distributions::{folded_mean, llr_stats, Hypothesis};
use crate::error::{invalid, Error, Result};
use crate::fusion::fc_llr_dual;
use crate::local_node::EmissionRule;
use crate::scenario::{NodeTest, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticConstants {
    /// Σ_l D(f0‖f1) and Σ_l D(f1‖f0).
    pub d_tot0: f64,
    pub d_tot1: f64,
    /// Per-node shares of `d_tot1` and `d_tot0`.
    pub r: Vec<f64>,
    pub rho: Vec<f64>,
    /// Mean FC increment when every node reports correctly.
    pub delta_a0: f64,
    pub delta_a1: f64,
    /// E|ξ*| with ξ* the FC increment when every node reports the wrong side.
    pub exi_star0: f64,
    pub exi_star1: f64,
    pub m0: f64,
    pub m1: f64,
}

impl AsymptoticConstants {
    /// Slope bound on E_i[N]/β: `1/D_tot^i + M_i`.
    pub fn edd_slope(&self, hypothesis: Hypothesis) -> f64 {
        match hypothesis {
            Hypothesis::H0 => 1.0 / self.d_tot0 + self.m0,
            Hypothesis::H1 => 1.0 / self.d_tot1 + self.m1,
        }
    }

    /// Bayes-risk excess constant `M0·π + M1·(1 − π)` for prior `π` on H0.
    pub fn bayes_constant(&self, pi: f64) -> f64 {
        self.m0 * pi + self.m1 * (1.0 - pi)
    }
}

fn binary_levels(scenario: &Scenario) -> Result<Vec<(f64, f64)>> {
    scenario
        .nodes
        .iter()
        .map(|n| match &n.test {
            NodeTest::Sprt(cfg) => match cfg.emission {
                EmissionRule::Binary { b1, b0 } => Ok((b1, b0)),
                EmissionRule::Quantized { .. } => Err(invalid("asymptotic constants need binary emissions")),
            },
            NodeTest::Glr(_) => Err(Error::Unsupported("asymptotic constants cover SPRT nodes only".into())),
        })
        .collect()
}

pub fn asymptotic_constants(scenario: &Scenario) -> Result<AsymptoticConstants> {
    scenario.validate()?;
    if scenario.channel.fading.is_some() {
        return Err(Error::Unsupported("asymptotic constants assume fixed channel gains".into()));
    }
    let levels = binary_levels(scenario)?;
    let mut d1 = Vec::with_capacity(levels.len());
    let mut d0 = Vec::with_capacity(levels.len());
    for (node, &gain) in scenario.nodes.iter().zip(&scenario.channel.gains) {
        let (m1, _) = llr_stats(&node.pair, &observation_law(Hypothesis::H1, gain, &node.pair));
        let (m0, _) = llr_stats(&node.pair, &observation_law(Hypothesis::H0, gain, &node.pair));
        if !(m1 > 0.0 && m0 < 0.0) {
            return Err(invalid("every node needs positive drift under H1 and negative under H0"));
        }
        d1.push(m1);
        d0.push(-m0);
    }
    let d_tot1: f64 = d1.iter().sum();
    let d_tot0: f64 = d0.iter().sum();

    let fusion = &scenario.fusion;
    let base = scenario.channel.fc_noise.mean;
    let sum_b1: f64 = levels.iter().map(|l| l.0).sum();
    let sum_b0: f64 = levels.iter().map(|l| l.1).sum();
    let delta_a1 = fc_llr_dual(base + sum_b1, fusion);
    let delta_a0 = fc_llr_dual(base + sum_b0, fusion);
    if !(delta_a1 > 0.0 && delta_a0 < 0.0) {
        return Err(invalid(format!(
            "FC drift with all nodes correct must point at the truth (got {delta_a0}, {delta_a1})"
        )));
    }
    // the FC increment is affine in y, so ξ* is Gaussian with slope²·σ² variance
    let xi_var = fusion.dual_slope().powi(2) * scenario.channel.fc_noise.variance;
    let exi_star1 = folded_mean(delta_a0, xi_var);
    let exi_star0 = folded_mean(delta_a1, xi_var);
    let c1 = 1.0 + exi_star1 / d_tot1;
    let c0 = -(1.0 + exi_star0 / d_tot0);
    Ok(AsymptoticConstants {
        d_tot0,
        d_tot1,
        r: d1.iter().map(|d| d / d_tot1).collect(),
        rho: d0.iter().map(|d| d / d_tot0).collect(),
        delta_a0,
        delta_a1,
        exi_star0,
        exi_star1,
        m0: c0 / delta_a0,
        m1: c1 / delta_a1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentVerdict {
    pub holds: bool,
    pub witness_eta: Option<f64>,
    pub r0: f64,
    pub r1: f64,
    /// Largest condition value seen on the grid.
    pub best_value: f64,
}

/// Sufficient condition for error probabilities that vanish faster than the
/// threshold cost, for identical Gaussian nodes with symmetric parameters:
/// some `η ∈ (0, min(R0, R1))` with `σ²η / (4μ²√(2η) + 2μLb) > 1`, where
/// `R_i = δ_i² / (2ρ_i²)`. Scans `eta_grid` (fractions of `min R` when `None`).
pub fn exponent_condition_gaussian(scenario: &Scenario, eta_grid: Option<&[f64]>) -> Result<ExponentVerdict> {
    scenario.validate()?;
    let levels = binary_levels(scenario)?;
    let first = &scenario.nodes[0];
    let gain = scenario.channel.gains[0];
    let homogeneous = scenario.channel.fading.is_none()
        && scenario.nodes.iter().all(|n| n.pair == first.pair)
        && scenario.channel.gains.iter().all(|&g| g == gain)
        && levels.iter().all(|&l| l == levels[0]);
    if !homogeneous {
        return Err(Error::Unsupported("condition check needs identical nodes and gains".into()));
    }
    let (b1, b0) = levels[0];
    let f = &scenario.fusion;
    if f.mu1 != f.mu0 || b1 != -b0 {
        return Err(Error::Unsupported("condition check needs mu1 = mu0 and b1 = -b0".into()));
    }
    let (mu, b, l) = (f.mu1, b1, scenario.len() as f64);
    let sigma_sq = scenario.channel.fc_noise.variance;

    let (dm1, v1) = llr_stats(&first.pair, &observation_law(Hypothesis::H1, gain, &first.pair));
    let (dm0, v0) = llr_stats(&first.pair, &observation_law(Hypothesis::H0, gain, &first.pair));
    let r1 = dm1 * dm1 / (2.0 * v1);
    let r0 = dm0 * dm0 / (2.0 * v0);
    let r_min = r0.min(r1);
    if !(r_min > 0.0 && r_min.is_finite()) {
        return Err(invalid(format!("empty eta range (R0 = {r0}, R1 = {r1})")));
    }
    let default_grid: Vec<f64>;
    let grid = match eta_grid {
        Some(g) => g,
        None => {
            default_grid = (1..=1000).map(|i| r_min * i as f64 / 1001.0).collect();
            &default_grid
        }
    };
    let mut best = f64::NEG_INFINITY;
    let mut witness = None;
    for &eta in grid.iter().filter(|&&e| e > 0.0 && e < r_min) {
        let value = condition_value(eta, sigma_sq, mu, l, b);
        best = best.max(value);
        if value > 1.0 && witness.is_none() {
            witness = Some(eta);
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(invalid("no grid point inside (0, min R)"));
    }
    Ok(ExponentVerdict { holds: witness.is_some(), witness_eta: witness, r0, r1, best_value: best })
}

pub fn condition_value(eta: f64, sigma_sq: f64, mu: f64, l: f64, b: f64) -> f64 {
    sigma_sq * eta / (4.0 * mu * mu * (2.0 * eta).sqrt() + 2.0 * mu * l * b)
}
