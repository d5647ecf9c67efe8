//! Analytical approximations and asymptotic constants that mirror the
//! simulator on the same scenario.

pub mod asymptotic;
pub mod epochs;
pub mod fredholm;
pub mod legendre;
pub mod order_stats;
pub mod pmd;

pub use asymptotic::{asymptotic_constants, exponent_condition_gaussian, AsymptoticConstants, ExponentVerdict};
pub use epochs::{
    csprt_edd_approx, csprt_epochs, dualsprt_edd_approx, dualsprt_epochs, DriftConvention, Epoch, EpochTable,
};
pub use fredholm::{fredholm_lambda, FredholmSolution};
pub use legendre::{legendre_rate, LegendreRate};
pub use order_stats::order_statistic_means;
pub use pmd::{
    csprt_error_approx, csprt_pmd_approx, dualsprt_error_bounds, dualsprt_pmd_bounds, PmdApprox, PmdBounds, SeriesForm,
};

use crate::channel::observation_law;
use crate::distributions::{llr_stats, passage_approx, Hypothesis, PassageDistribution};
use crate::error::{invalid, Error, Result};
use crate::scenario::{NodeTest, Scenario};

/// Gaussian passage law of one SPRT node toward the true hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct NodePassage {
    pub node: usize,
    pub dist: PassageDistribution,
    /// Signed LLR drift under the true observation law.
    pub drift: f64,
}

/// Gaussian passage laws of every node toward `hypothesis`, in node order.
pub fn passage_distributions(scenario: &Scenario, hypothesis: Hypothesis) -> Result<Vec<PassageDistribution>> {
    Ok(node_passages(scenario, hypothesis)?.into_iter().map(|p| p.dist).collect())
}

pub(crate) fn node_passages(scenario: &Scenario, hypothesis: Hypothesis) -> Result<Vec<NodePassage>> {
    scenario.validate()?;
    if scenario.channel.fading.is_some() {
        return Err(Error::Unsupported("analysis assumes fixed channel gains".into()));
    }
    scenario
        .nodes
        .iter()
        .zip(&scenario.channel.gains)
        .enumerate()
        .map(|(node, (spec, &gain))| {
            let NodeTest::Sprt(cfg) = &spec.test else {
                return Err(Error::Unsupported("analysis covers SPRT nodes only".into()));
            };
            let truth = observation_law(hypothesis, gain, &spec.pair);
            let (drift, rho_sq) = llr_stats(&spec.pair, &truth);
            let (gamma, toward) = match hypothesis {
                Hypothesis::H1 => (cfg.gamma1, drift),
                Hypothesis::H0 => (cfg.gamma0, -drift),
            };
            if !(toward > 0.0) {
                return Err(invalid(format!("node {node} drifts away from {} (drift {drift})", hypothesis.label())));
            }
            Ok(NodePassage { node, dist: passage_approx(gamma, toward, rho_sq)?, drift })
        })
        .collect()
}
