//! Mean-path approximation of the fusion statistic: epoch tables and E_DD.
//!
//! Between consecutive mean transmission epochs the FC statistic is treated
//! as moving with constant drift. Drift after `j` transmissions equals the FC
//! LLR evaluated at the mean MAC input, since that LLR is affine in `y`.

use serde::Serialize;

use super::node_passages;
use super::order_stats::order_statistic_means;
use crate::distributions::Hypothesis;
use crate::error::{invalid, Error, Result};
use crate::fusion::{fc_llr_csprt, fc_llr_dual, CsprtSide};
use crate::local_node::EmissionRule;
use crate::scenario::{NodeTest, Scenario};

/// Which drift covers the gap `(E[t_{j−1}], E[t_j]]` in the running mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftConvention {
    /// The drift in force during the gap, i.e. the one set at `t_{j−1}`.
    #[default]
    DriftSegment,
    /// The drift set at the gap's right end, `t_j`.
    RightEndpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Epoch {
    pub time_mean: f64,
    /// Mean FC increment from this epoch onward.
    pub fc_drift: f64,
    /// Mean FC statistic at this epoch.
    pub fc_mean_before: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochTable {
    pub hypothesis: Hypothesis,
    /// Mean FC increment before the first epoch.
    pub initial_drift: f64,
    pub epochs: Vec<Epoch>,
    pub convention: DriftConvention,
    /// One-sided statistic (clamped at zero on the side away from the target).
    pub clamped: bool,
}

impl EpochTable {
    pub fn from_parts(
        hypothesis: Hypothesis,
        times: &[f64],
        drifts: &[f64],
        initial_drift: f64,
        convention: DriftConvention,
        clamped: bool,
    ) -> Result<Self> {
        if times.is_empty() || times.len() != drifts.len() {
            return Err(invalid("epoch table needs matching, non-empty times and drifts"));
        }
        if !times.windows(2).all(|w| w[0] < w[1]) || !(times[0] >= 0.0) {
            return Err(invalid(format!("epoch times must be non-negative and strictly increasing: {times:?}")));
        }
        let means = running_means(hypothesis, times, drifts, initial_drift, convention, clamped);
        let epochs = times
            .iter()
            .zip(drifts)
            .zip(means)
            .map(|((&time_mean, &fc_drift), fc_mean_before)| Epoch { time_mean, fc_drift, fc_mean_before })
            .collect();
        Ok(Self { hypothesis, initial_drift, epochs, convention, clamped })
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Recomputes the running means from drifts and gaps; true when they match.
    pub fn recursion_holds(&self) -> bool {
        let times: Vec<f64> = self.epochs.iter().map(|e| e.time_mean).collect();
        let drifts: Vec<f64> = self.epochs.iter().map(|e| e.fc_drift).collect();
        let means = running_means(self.hypothesis, &times, &drifts, self.initial_drift, self.convention, self.clamped);
        self.epochs.iter().zip(means).all(|(e, m)| (e.fc_mean_before - m).abs() <= 1e-9 * (1.0 + m.abs()))
    }

    fn sign(&self) -> f64 {
        match self.hypothesis {
            Hypothesis::H1 => 1.0,
            Hypothesis::H0 => -1.0,
        }
    }
}

fn running_means(
    hypothesis: Hypothesis,
    times: &[f64],
    drifts: &[f64],
    initial_drift: f64,
    convention: DriftConvention,
    clamped: bool,
) -> Vec<f64> {
    let clamp = |f: f64| match (clamped, hypothesis) {
        (false, _) => f,
        (true, Hypothesis::H1) => f.max(0.0),
        (true, Hypothesis::H0) => f.min(0.0),
    };
    let mut out = Vec::with_capacity(times.len());
    let (mut prev_t, mut prev_drift, mut f) = (0.0, initial_drift, 0.0);
    for (&t, &d) in times.iter().zip(drifts) {
        let rate = match convention {
            DriftConvention::DriftSegment => prev_drift,
            DriftConvention::RightEndpoint => d,
        };
        f = clamp(f + rate * (t - prev_t));
        out.push(f);
        prev_t = t;
        prev_drift = d;
    }
    out
}

/// Mean time for the FC statistic to reach `beta` along the table's mean path:
/// `E[t_{l*}] + (β − F̄_{l*}) / δ^{l*}`, where `l*` is the first epoch whose drift
/// points at the target and gets there before the next epoch. The final gap is
/// unbounded; the pre-epoch segment counts only if its drift already points at
/// the target.
pub fn edd_approx(table: &EpochTable, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(invalid(format!("beta must be positive, got {beta}")));
    }
    let s = table.sign();
    let mut start_t = 0.0;
    let mut start_f = 0.0;
    let mut drift = table.initial_drift;
    for k in 0..=table.epochs.len() {
        let end_t = table.epochs.get(k).map_or(f64::INFINITY, |e| e.time_mean);
        if k > 0 || table.initial_drift * s > 0.0 {
            let d = drift * s;
            if d > 0.0 {
                let need = ((beta - start_f * s) / d).max(0.0);
                if need < end_t - start_t {
                    return Ok(start_t + need);
                }
            }
        }
        if let Some(e) = table.epochs.get(k) {
            start_t = e.time_mean;
            start_f = e.fc_mean_before;
            drift = e.fc_drift;
        }
    }
    Err(Error::Numeric("mean path never reaches the threshold; final drift has the wrong sign".into()))
}

/// Epochs for DualSPRT with binary emissions: order-statistic means of node
/// passage times, with drift after `j` transmissions from the FC LLR.
pub fn dualsprt_epochs(scenario: &Scenario, hypothesis: Hypothesis) -> Result<EpochTable> {
    dualsprt_epochs_with(scenario, hypothesis, DriftConvention::default())
}

pub fn dualsprt_epochs_with(
    scenario: &Scenario,
    hypothesis: Hypothesis,
    convention: DriftConvention,
) -> Result<EpochTable> {
    let passages = node_passages(scenario, hypothesis)?;
    let mut emissions = Vec::with_capacity(passages.len());
    for p in &passages {
        match &sprt_cfg(scenario, p.node)?.emission {
            EmissionRule::Binary { b1, b0 } => emissions.push(match hypothesis {
                Hypothesis::H1 => *b1,
                Hypothesis::H0 => *b0,
            }),
            EmissionRule::Quantized { .. } => {
                return Err(invalid("DualSPRT epochs need binary emissions"));
            }
        }
    }
    let dists: Vec<_> = passages.iter().map(|p| p.dist).collect();
    let times = strictly_increasing(order_statistic_means(&dists)?);
    let base = scenario.channel.fc_noise.mean;
    let mut sum = 0.0;
    let drifts: Vec<f64> = emissions
        .iter()
        .map(|b| {
            sum += b;
            fc_llr_dual(base + sum, &scenario.fusion)
        })
        .collect();
    check_reaches(hypothesis, &drifts)?;
    let initial = fc_llr_dual(base, &scenario.fusion);
    EpochTable::from_parts(hypothesis, &times, &drifts, initial, convention, false)
}

pub fn dualsprt_edd_approx(table: &EpochTable, beta: f64) -> Result<f64> {
    edd_approx(table, beta)
}

/// Epochs for the one-sided FC statistics with quantized emissions. Nodes are
/// taken to transmit in order of their mean passage times; after its onset a
/// node steps up one level every `Δ/δ_l` slots. Sub-epochs are listed only
/// while they precede the next onset; levels at every epoch follow each
/// node's own schedule.
pub fn csprt_epochs(scenario: &Scenario, hypothesis: Hypothesis) -> Result<EpochTable> {
    csprt_epochs_with(scenario, hypothesis, DriftConvention::default())
}

pub fn csprt_epochs_with(
    scenario: &Scenario,
    hypothesis: Hypothesis,
    convention: DriftConvention,
) -> Result<EpochTable> {
    let mut passages = node_passages(scenario, hypothesis)?;
    passages.sort_by(|a, b| a.dist.mean.total_cmp(&b.dist.mean));
    let mut schedules = Vec::with_capacity(passages.len());
    for p in &passages {
        match &sprt_cfg(scenario, p.node)?.emission {
            EmissionRule::Quantized { levels_up, levels_down, delta1, delta0 } => {
                let (levels, width) = match hypothesis {
                    Hypothesis::H1 => (*levels_up, *delta1),
                    Hypothesis::H0 => (*levels_down, *delta0),
                };
                schedules.push((levels, width / p.drift.abs()));
            }
            EmissionRule::Binary { .. } => return Err(invalid("CSPRT epochs need quantized emissions")),
        }
    }
    let dists: Vec<_> = passages.iter().map(|p| p.dist).collect();
    let onsets = order_statistic_means(&dists)?;
    let spacings: Vec<f64> = schedules.iter().map(|(_, sp)| *sp).collect();
    let times = strictly_increasing(merge_epochs(&onsets, &spacings));

    let side = match hypothesis {
        Hypothesis::H1 => CsprtSide::Up,
        Hypothesis::H0 => CsprtSide::Down,
    };
    let base = scenario.channel.fc_noise.mean;
    let level_sum = |t: f64| -> f64 {
        onsets
            .iter()
            .zip(&schedules)
            .filter(|(&onset, _)| onset <= t + 1e-9)
            .map(|(&onset, (levels, spacing))| {
                let idx = (((t - onset) / spacing + 1e-9).floor() as usize).min(3);
                levels[idx]
            })
            .sum()
    };
    let drifts: Vec<f64> = times.iter().map(|&t| fc_llr_csprt(base + level_sum(t), &scenario.fusion, side)).collect();
    check_reaches(hypothesis, &drifts)?;
    let initial = fc_llr_csprt(base, &scenario.fusion, side);
    EpochTable::from_parts(hypothesis, &times, &drifts, initial, convention, true)
}

pub fn csprt_edd_approx(table: &EpochTable, beta: f64) -> Result<f64> {
    edd_approx(table, beta)
}

/// Onsets plus each node's three level steps that land before the next onset.
pub fn merge_epochs(onsets: &[f64], spacings: &[f64]) -> Vec<f64> {
    let mut times = Vec::with_capacity(4 * onsets.len());
    for (i, (&onset, &spacing)) in onsets.iter().zip(spacings).enumerate() {
        let next = onsets.get(i + 1).copied().unwrap_or(f64::INFINITY);
        times.push(onset);
        for step in 1..4 {
            let t = onset + step as f64 * spacing;
            if t < next {
                times.push(t);
            }
        }
    }
    times.sort_by(f64::total_cmp);
    times
}

fn sprt_cfg(scenario: &Scenario, node: usize) -> Result<&crate::local_node::SprtNodeConfig> {
    match &scenario.nodes[node].test {
        NodeTest::Sprt(cfg) => Ok(cfg),
        NodeTest::Glr(_) => Err(Error::Unsupported("epoch analysis covers SPRT nodes only".into())),
    }
}

fn check_reaches(hypothesis: Hypothesis, drifts: &[f64]) -> Result<()> {
    let ok = drifts.iter().any(|&d| match hypothesis {
        Hypothesis::H1 => d > 0.0,
        Hypothesis::H0 => d < 0.0,
    });
    if ok {
        Ok(())
    } else {
        Err(invalid(format!("FC drift never points toward {} (drifts {drifts:?})", hypothesis.label())))
    }
}

// Ties between identical nodes give equal epoch means; nudge them apart so the
// table stays strictly ordered without changing any segment materially.
fn strictly_increasing(mut times: Vec<f64>) -> Vec<f64> {
    // a wide Gaussian passage law can put the earliest mean below zero
    if let Some(first) = times.first_mut() {
        *first = first.max(0.0);
    }
    for i in 1..times.len() {
        let floor = times[i - 1] + 1e-9 * (1.0 + times[i - 1].abs());
        if times[i] < floor {
            times[i] = floor;
        }
    }
    times
}
