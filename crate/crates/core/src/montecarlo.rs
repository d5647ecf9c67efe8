//! Seeded trial engine and performance estimates.
//!
//! A trial runs slot by slot: every node draws one observation, updates its
//! test and emits; the fusion center sees the MAC sum plus fresh noise and
//! updates its statistic. Trials are independent and keyed by their index,
//! so estimates are identical for any number of workers.

use crate::channel::{draw_fading_power, mac_fuse, observation_law};
use crate::distributions::{Density, GaussianModel, Hypothesis, HypothesisPair};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::fusion::{fusion_step, FusionState, FusionStatistic};
use crate::local_node::{glr_emission, glr_update, sprt_emission, sprt_update_increment, GlrNodeState, LocalNodeState};
use crate::rng::{trial_rng, TrialRng};
use crate::scenario::{NodeTest, Scenario};

pub use crate::scenario::NodeSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    H0,
    H1,
    Truncated,
}

impl Outcome {
    pub fn decision(self) -> Option<Hypothesis> {
        match self {
            Outcome::H0 => Some(Hypothesis::H0),
            Outcome::H1 => Some(Hypothesis::H1),
            Outcome::Truncated => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialResult {
    pub decision: Outcome,
    pub stop_time: u64,
}

/// LLR as the quadratic `a·x² + b·x + c`.
#[derive(Debug, Clone, Copy)]
struct LlrKernel {
    a: f64,
    b: f64,
    c: f64,
}

impl LlrKernel {
    fn new(pair: &HypothesisPair) -> Self {
        let (f0, f1) = (pair.f0(), pair.f1());
        let a = 0.5 * (1.0 / f0.variance - 1.0 / f1.variance);
        let b = f1.mean / f1.variance - f0.mean / f0.variance;
        let c = f1.ln_pdf(0.0) - f0.ln_pdf(0.0);
        Self { a, b, c }
    }

    fn eval(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }
}

enum NodeRun<'a> {
    Sprt { kernel: LlrKernel, cfg: &'a crate::local_node::SprtNodeConfig, state: LocalNodeState },
    Glr { cfg: &'a crate::local_node::GlrNodeConfig, state: GlrNodeState },
}

/// Runs one trial with an explicit RNG.
pub fn run_trial_with(scenario: &Scenario, hypothesis: Hypothesis, rng: &mut TrialRng) -> TrialResult {
    run_trial_observed(scenario, hypothesis, rng, |_, _| {})
}

/// [`run_trial_with`], calling `observe(k, state)` after every FC update.
pub fn run_trial_observed<F: FnMut(u64, &FusionState)>(
    scenario: &Scenario,
    hypothesis: Hypothesis,
    rng: &mut TrialRng,
    mut observe: F,
) -> TrialResult {
    // slow fading: one power draw per node, fixed for the whole trial
    let mut truths: Vec<GaussianModel> = Vec::with_capacity(scenario.nodes.len());
    let mut runs: Vec<NodeRun> = Vec::with_capacity(scenario.nodes.len());
    for (node, &gain) in scenario.nodes.iter().zip(&scenario.channel.gains) {
        let faded = scenario.channel.fading.map(|f| draw_fading_power(&f, rng));
        let (truth, design) = match faded {
            Some(power) => {
                let f0 = *node.pair.f0();
                let h1 = f0.shifted(power);
                let truth = match hypothesis {
                    Hypothesis::H0 => f0,
                    Hypothesis::H1 => h1,
                };
                // SPRT nodes are given the realised channel; GLR nodes are not
                let design = if power > 0.0 { HypothesisPair::new(f0, h1).ok() } else { None };
                (truth, design)
            }
            None => (observation_law(hypothesis, gain, &node.pair), None),
        };
        truths.push(truth);
        runs.push(match &node.test {
            NodeTest::Sprt(cfg) => NodeRun::Sprt {
                kernel: LlrKernel::new(design.as_ref().unwrap_or(&node.pair)),
                cfg,
                state: LocalNodeState::default(),
            },
            NodeTest::Glr(cfg) => NodeRun::Glr { cfg, state: GlrNodeState::default() },
        });
    }

    let noise = scenario.channel.fc_noise;
    let mut emissions = vec![0.0; runs.len()];
    let mut fc = FusionState::new(scenario.fusion.algorithm);
    for k in 1..=scenario.max_steps {
        for ((run, truth), out) in runs.iter_mut().zip(&truths).zip(emissions.iter_mut()) {
            let x = truth.sample(rng);
            *out = match run {
                NodeRun::Sprt { kernel, cfg, state } => {
                    *state = sprt_update_increment(*state, kernel.eval(x), cfg);
                    sprt_emission(state, cfg)
                }
                NodeRun::Glr { cfg, state } => {
                    *state = glr_update(*state, x, cfg.sigma_sq, cfg);
                    glr_emission(state, k, cfg)
                }
            };
        }
        let y = mac_fuse(&emissions, noise.sample(rng));
        fc = fusion_step(fc, y, &scenario.fusion).expect("loop stops at the first decision");
        observe(k, &fc);
        if let Some(d) = fc.decision {
            let decision = match d {
                Hypothesis::H0 => Outcome::H0,
                Hypothesis::H1 => Outcome::H1,
            };
            return TrialResult { decision, stop_time: k };
        }
    }
    TrialResult { decision: Outcome::Truncated, stop_time: scenario.max_steps }
}

/// Runs trial `trial` of the experiment keyed by `master_seed`.
pub fn run_trial(scenario: &Scenario, hypothesis: Hypothesis, master_seed: u64, trial: u64) -> TrialResult {
    run_trial_with(scenario, hypothesis, &mut trial_rng(master_seed, trial))
}

/// Horizon of 50 × the largest analytic E_DD prediction over both hypotheses,
/// or the fallback when the scenario is outside the analysis' reach.
pub fn default_max_steps(scenario: &Scenario) -> u64 {
    use crate::analysis::epochs::{csprt_epochs, dualsprt_epochs, edd_approx};
    use crate::fusion::FusionAlgorithm;
    let predict = |h: Hypothesis| -> Option<f64> {
        let table = match scenario.fusion.algorithm {
            FusionAlgorithm::DualSprt => dualsprt_epochs(scenario, h).ok()?,
            FusionAlgorithm::Csprt => csprt_epochs(scenario, h).ok()?,
        };
        edd_approx(&table, beta_for(scenario, h)).ok()
    };
    match (predict(Hypothesis::H0), predict(Hypothesis::H1)) {
        (Some(a), Some(b)) if a.is_finite() && b.is_finite() => (50.0 * a.max(b)).ceil().max(1.0) as u64,
        _ => crate::config::FALLBACK_MAX_STEPS,
    }
}

fn beta_for(scenario: &Scenario, h: Hypothesis) -> f64 {
    match h {
        Hypothesis::H1 => scenario.fusion.beta1,
        Hypothesis::H0 => scenario.fusion.beta0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceEstimate {
    /// Mean stopping time over trials that reached a decision.
    pub edd: f64,
    pub edd_se: f64,
    /// Fraction of all trials that decided the wrong hypothesis.
    pub p_error: f64,
    pub p_error_se: f64,
    pub n_trials: u64,
    pub n_correct: u64,
    pub n_wrong: u64,
    pub n_truncated: u64,
    pub truncation_rate: f64,
}

impl PerformanceEstimate {
    pub fn from_results(hypothesis: Hypothesis, results: &[TrialResult]) -> Self {
        let n = results.len() as u64;
        let (mut correct, mut wrong, mut truncated) = (0u64, 0u64, 0u64);
        let (mut s1, mut s2) = (0.0f64, 0.0f64);
        for r in results {
            match r.decision.decision() {
                None => truncated += 1,
                Some(d) => {
                    if d == hypothesis {
                        correct += 1;
                    } else {
                        wrong += 1;
                    }
                    let t = r.stop_time as f64;
                    s1 += t;
                    s2 += t * t;
                }
            }
        }
        let decided = (correct + wrong) as f64;
        let edd = if decided > 0.0 { s1 / decided } else { f64::NAN };
        let edd_se = if decided > 1.0 {
            let var = (s2 - decided * edd * edd) / (decided - 1.0);
            (var.max(0.0) / decided).sqrt()
        } else {
            f64::INFINITY
        };
        let nf = n as f64;
        let p_error = if n > 0 { wrong as f64 / nf } else { f64::NAN };
        let p_error_se = if n > 1 { (p_error * (1.0 - p_error) / (nf - 1.0)).sqrt() } else { f64::INFINITY };
        Self {
            edd,
            edd_se,
            p_error,
            p_error_se,
            n_trials: n,
            n_correct: correct,
            n_wrong: wrong,
            n_truncated: truncated,
            truncation_rate: if n > 0 { truncated as f64 / nf } else { f64::NAN },
        }
    }

    pub fn p_correct(&self) -> f64 {
        self.n_correct as f64 / self.n_trials as f64
    }
}

/// Estimates E_DD and the error probability under `hypothesis` from
/// `n_trials` independent trials.
pub fn estimate(
    scenario: &Scenario,
    hypothesis: Hypothesis,
    n_trials: u64,
    master_seed: u64,
) -> Result<PerformanceEstimate> {
    estimate_with(scenario, hypothesis, n_trials, master_seed, Execution::Auto)
}

pub fn estimate_with(
    scenario: &Scenario,
    hypothesis: Hypothesis,
    n_trials: u64,
    master_seed: u64,
    exec: Execution,
) -> Result<PerformanceEstimate> {
    if n_trials == 0 {
        return Err(Error::InvalidParameter("n_trials must be at least 1".into()));
    }
    scenario.validate()?;
    let results = map_indexed(n_trials, exec, |i| run_trial(scenario, hypothesis, master_seed, i));
    let est = PerformanceEstimate::from_results(hypothesis, &results);
    if est.truncation_rate > 0.01 {
        log::warn!(
            "{}: {:.2}% of trials hit the {}-slot horizon",
            scenario.name,
            100.0 * est.truncation_rate,
            scenario.max_steps
        );
    }
    Ok(est)
}

/// One estimate per β (β1 = β0 = β). Every β reuses the same trial streams.
pub fn sweep(
    scenario: &Scenario,
    hypothesis: Hypothesis,
    beta_values: &[f64],
    n_trials: u64,
    master_seed: u64,
) -> Result<Vec<(f64, PerformanceEstimate)>> {
    sweep_with(scenario, hypothesis, beta_values, n_trials, master_seed, Execution::Auto)
}

pub fn sweep_with(
    scenario: &Scenario,
    hypothesis: Hypothesis,
    beta_values: &[f64],
    n_trials: u64,
    master_seed: u64,
    exec: Execution,
) -> Result<Vec<(f64, PerformanceEstimate)>> {
    if beta_values.is_empty() {
        return Err(Error::Usage("beta grid is empty".into()));
    }
    beta_values
        .iter()
        .map(|&b| Ok((b, estimate_with(&scenario.with_beta(b), hypothesis, n_trials, master_seed, exec)?)))
        .collect()
}

/// Ensemble mean of the FC statistic over slots `1..=horizon`: `F` for
/// DualSPRT, `F¹` (H1) or `F⁰` (H0) for CSPRT. Thresholds are lifted out of
/// reach so every path runs the full horizon.
pub fn fc_mean_path(
    scenario: &Scenario,
    hypothesis: Hypothesis,
    horizon: u64,
    n_trials: u64,
    master_seed: u64,
    exec: Execution,
) -> Result<Vec<f64>> {
    if n_trials == 0 || horizon == 0 {
        return Err(Error::InvalidParameter("fc_mean_path needs trials and a horizon".into()));
    }
    let mut s = scenario.with_beta(f64::MAX);
    s.max_steps = horizon;
    s.validate()?;
    let paths = map_indexed(n_trials, exec, |i| {
        let mut path = Vec::with_capacity(horizon as usize);
        run_trial_observed(&s, hypothesis, &mut trial_rng(master_seed, i), |_, st| {
            path.push(match (st.statistic, hypothesis) {
                (FusionStatistic::DualSprt { f }, _) => f,
                (FusionStatistic::Csprt { f1, .. }, Hypothesis::H1) => f1,
                (FusionStatistic::Csprt { f0, .. }, Hypothesis::H0) => f0,
            })
        });
        path
    });
    let mut mean = vec![0.0; horizon as usize];
    for p in &paths {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    Ok(mean.into_iter().map(|m| m / n_trials as f64).collect())
}

/// Lower envelope of an operating curve: the smallest E_DD among
/// `(p_error, edd)` points whose error probability is at most `target`.
pub fn envelope_at(points: &[(f64, f64)], target: f64) -> Option<f64> {
    points.iter().filter(|(p, e)| *p <= target && e.is_finite()).map(|&(_, e)| e).min_by(f64::total_cmp)
}
