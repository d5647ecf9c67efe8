//! Per-sensor sequential tests.
//!
//! Two front ends are provided. The SPRT node accumulates the exact LLR and
//! reports either a binary decision or a four-level quantization of how far
//! past its threshold the statistic has travelled. The GLR node handles an
//! unknown post-change mean with a clamped MLE and a shrinking boundary
//! `g(n·c)`.
//!
//! A node never stops sampling inside a trial: once it decides, the decision
//! is frozen but the statistic keeps evolving and the node keeps reporting
//! until the fusion center stops.

use serde::{Deserialize, Serialize};

use crate::distributions::{kl_divergence, llr, GaussianModel, Hypothesis, HypothesisPair};
use crate::error::{invalid, numeric, Result};

/// What an SPRT node sends once its statistic leaves `(-gamma0, gamma1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EmissionRule {
    Binary {
        b1: f64,
        b0: f64,
    },
    /// Band `i` (1-based) above the threshold is `[γ1+(i−1)Δ1, γ1+iΔ1)`; band 4
    /// is unbounded. Mirrored below `−γ0` with `Δ0`.
    Quantized {
        levels_up: [f64; 4],
        levels_down: [f64; 4],
        delta1: f64,
        delta0: f64,
    },
}

impl EmissionRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            EmissionRule::Binary { b1, b0 } => {
                if !(*b1 > 0.0 && *b0 < 0.0) {
                    return Err(invalid(format!("binary emission needs b1 > 0 > b0, got b1={b1}, b0={b0}")));
                }
            }
            EmissionRule::Quantized { levels_up, levels_down, delta1, delta0 } => {
                validate_levels(levels_up, levels_down)?;
                if !(*delta1 > 0.0 && *delta0 > 0.0) {
                    return Err(invalid("quantization band widths must be positive"));
                }
            }
        }
        Ok(())
    }
}

fn validate_levels(up: &[f64; 4], down: &[f64; 4]) -> Result<()> {
    if !up.windows(2).all(|w| w[0] < w[1]) {
        return Err(invalid(format!("levels_up must be strictly increasing, got {up:?}")));
    }
    if !down.windows(2).all(|w| w[0] > w[1]) {
        return Err(invalid(format!("levels_down must be strictly decreasing, got {down:?}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SprtNodeConfig {
    pub gamma1: f64,
    pub gamma0: f64,
    pub emission: EmissionRule,
}

impl SprtNodeConfig {
    pub fn new(gamma1: f64, gamma0: f64, emission: EmissionRule) -> Result<Self> {
        let cfg = Self { gamma1, gamma0, emission };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1 > 0.0 && self.gamma0 > 0.0) {
            return Err(invalid(format!(
                "node thresholds must be positive, got gamma1={}, gamma0={}",
                self.gamma1, self.gamma0
            )));
        }
        self.emission.validate()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LocalNodeState {
    pub w: f64,
    pub steps: u64,
    pub decided: Option<Hypothesis>,
}

/// Adds the LLR of `x` and records the first threshold crossing.
pub fn sprt_update(state: LocalNodeState, x: f64, pair: &HypothesisPair, cfg: &SprtNodeConfig) -> LocalNodeState {
    sprt_update_increment(state, llr(x, pair), cfg)
}

/// [`sprt_update`] with the LLR increment already computed.
pub fn sprt_update_increment(mut state: LocalNodeState, increment: f64, cfg: &SprtNodeConfig) -> LocalNodeState {
    state.w += increment;
    state.steps += 1;
    if state.decided.is_none() {
        if state.w >= cfg.gamma1 {
            state.decided = Some(Hypothesis::H1);
        } else if state.w <= -cfg.gamma0 {
            state.decided = Some(Hypothesis::H0);
        }
    }
    state
}

pub fn sprt_emission(state: &LocalNodeState, cfg: &SprtNodeConfig) -> f64 {
    let w = state.w;
    match &cfg.emission {
        EmissionRule::Binary { b1, b0 } => {
            if w >= cfg.gamma1 {
                *b1
            } else if w <= -cfg.gamma0 {
                *b0
            } else {
                0.0
            }
        }
        EmissionRule::Quantized { levels_up, levels_down, delta1, delta0 } => {
            if w >= cfg.gamma1 {
                levels_up[band_index(w - cfg.gamma1, *delta1)]
            } else if w <= -cfg.gamma0 {
                levels_down[band_index(-cfg.gamma0 - w, *delta0)]
            } else {
                0.0
            }
        }
    }
}

/// 0-based band for an excess `e ≥ 0` over the threshold.
pub(crate) fn band_index(excess: f64, width: f64) -> usize {
    let b = (excess / width).floor();
    if b >= 3.0 {
        3
    } else {
        b.max(0.0) as usize
    }
}

/// Boundary function of the GLR test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// `g(t) = max(log(1/t), 0)`.
    #[default]
    LogInverse,
}

impl Boundary {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Boundary::LogInverse => (-t.ln()).max(0.0),
        }
    }
}

/// `g(n·c)` for the default boundary.
pub fn glr_threshold(n: u64, c: f64) -> f64 {
    Boundary::LogInverse.eval(n as f64 * c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GlrEmissionRule {
    Binary {
        b1: f64,
        b0: f64,
    },
    /// Intervals `[g(kc), g(3kcΔ)), [g(3kcΔ), g(2kcΔ)), [g(2kcΔ), g(kcΔ)), [g(kcΔ), ∞)`.
    IntervalQuantized {
        levels_up: [f64; 4],
        levels_down: [f64; 4],
        delta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlrNodeConfig {
    /// Null mean θ0 (0 for the energy detector after removing σ²).
    pub theta0: f64,
    pub theta1: f64,
    pub a1: f64,
    pub a2: f64,
    pub c: f64,
    pub theta_star: f64,
    /// Known observation variance σ².
    pub sigma_sq: f64,
    #[serde(default)]
    pub boundary: Boundary,
    pub emission: GlrEmissionRule,
}

impl GlrNodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta1 > self.theta0) {
            return Err(invalid(format!("GLR needs theta1 > theta0, got {} <= {}", self.theta1, self.theta0)));
        }
        if !(self.a1 <= self.theta_star && self.theta_star <= self.a2) {
            return Err(invalid(format!(
                "GLR needs a1 <= theta_star <= a2, got [{}, {}] and {}",
                self.a1, self.a2, self.theta_star
            )));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(invalid(format!("GLR cost c must lie in (0,1), got {}", self.c)));
        }
        if !(self.sigma_sq > 0.0) {
            return Err(invalid("GLR sigma_sq must be positive"));
        }
        match &self.emission {
            GlrEmissionRule::Binary { b1, b0 } => {
                if !(*b1 > 0.0 && *b0 < 0.0) {
                    return Err(invalid("binary emission needs b1 > 0 > b0"));
                }
            }
            GlrEmissionRule::IntervalQuantized { levels_up, levels_down, delta } => {
                validate_levels(levels_up, levels_down)?;
                if !(*delta > 0.0 && 3.0 * delta <= 1.0) {
                    return Err(invalid(format!("interval width must satisfy 0 < 3Δ <= 1, got Δ={delta}")));
                }
            }
        }
        Ok(())
    }

    pub fn threshold(&self, n: u64) -> f64 {
        self.boundary.eval(n as f64 * self.c)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GlrNodeState {
    pub n: u64,
    pub sum_x: f64,
    pub w: f64,
    pub theta_hat: f64,
    pub decided: Option<Hypothesis>,
}

/// Σ_k log f_θ̂(x_k)/f_θ'(x_k) for N(θ, σ²) from the sufficient statistics.
pub fn gaussian_glr_sum(n: u64, sum_x: f64, theta_hat: f64, theta_alt: f64, sigma_sq: f64) -> f64 {
    (theta_hat - theta_alt) * (2.0 * sum_x - n as f64 * (theta_hat + theta_alt)) / (2.0 * sigma_sq)
}

pub fn glr_update(mut state: GlrNodeState, x: f64, sigma_sq: f64, cfg: &GlrNodeConfig) -> GlrNodeState {
    state.n += 1;
    state.sum_x += x;
    let n = state.n;
    state.theta_hat = (state.sum_x / n as f64).min(cfg.a2).max(cfg.a1);
    state.w = gaussian_glr_sum(n, state.sum_x, state.theta_hat, cfg.theta0, sigma_sq).max(gaussian_glr_sum(
        n,
        state.sum_x,
        state.theta_hat,
        cfg.theta1,
        sigma_sq,
    ));
    if state.decided.is_none() && state.w >= cfg.threshold(n) {
        state.decided = Some(glr_decision(state.theta_hat, cfg.theta_star));
    }
    state
}

/// Ties go to H1.
pub fn glr_decision(theta_hat: f64, theta_star: f64) -> Hypothesis {
    if theta_hat >= theta_star {
        Hypothesis::H1
    } else {
        Hypothesis::H0
    }
}

/// Point where D(f_θ*‖f_θ0) = D(f_θ*‖f_θ1) for N(θ, σ²). Equal variances
/// make this the midpoint.
pub fn solve_theta_star(theta0: f64, theta1: f64, sigma_sq: f64) -> Result<f64> {
    if !(theta0 < theta1) {
        return Err(invalid(format!("need theta0 < theta1, got {theta0} >= {theta1}")));
    }
    if !(sigma_sq > 0.0) {
        return Err(invalid("sigma_sq must be positive"));
    }
    Ok(0.5 * (theta0 + theta1))
}

/// Bisection on θ ↦ D(f_θ‖f_0) − D(f_θ‖f_1) over `[theta0, theta1]`, for
/// laws given by `family(θ)`.
pub fn solve_theta_star_bisection<F>(theta0: f64, theta1: f64, family: F) -> Result<f64>
where
    F: Fn(f64) -> GaussianModel,
{
    if !(theta0 < theta1) {
        return Err(invalid(format!("need theta0 < theta1, got {theta0} >= {theta1}")));
    }
    let (p0, p1) = (family(theta0), family(theta1));
    let diff = |t: f64| {
        let p = family(t);
        kl_divergence(&p, &p0) - kl_divergence(&p, &p1)
    };
    let (mut lo, mut hi) = (theta0, theta1);
    let (flo, fhi) = (diff(lo), diff(hi));
    if flo.signum() == fhi.signum() && flo != 0.0 && fhi != 0.0 {
        return Err(numeric("no sign change of the KL difference in [theta0, theta1]"));
    }
    let rising = flo < fhi;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = diff(mid);
        if (v < 0.0) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Interval edges `[g(kc), g(3kcΔ), g(2kcΔ), g(kcΔ)]`, nondecreasing since g decreases.
pub fn glr_interval_edges(k: u64, cfg: &GlrNodeConfig, delta: f64) -> [f64; 4] {
    let kc = k as f64 * cfg.c;
    let g = |t: f64| cfg.boundary.eval(t);
    [g(kc), g(kc * 3.0 * delta), g(kc * 2.0 * delta), g(kc * delta)]
}

/// Value sent at slot `k`. Silent until the node has stopped; afterwards the
/// level comes from the stopping decision and the current interval of `w`.
pub fn glr_emission(state: &GlrNodeState, k: u64, cfg: &GlrNodeConfig) -> f64 {
    let Some(decision) = state.decided else {
        return 0.0;
    };
    match &cfg.emission {
        GlrEmissionRule::Binary { b1, b0 } => match decision {
            Hypothesis::H1 => *b1,
            Hypothesis::H0 => *b0,
        },
        GlrEmissionRule::IntervalQuantized { levels_up, levels_down, delta } => {
            let edges = glr_interval_edges(k, cfg, *delta);
            // w under the first edge after stopping stays in the lowest band
            let band = edges[1..].iter().filter(|&&e| state.w >= e).count();
            match decision {
                Hypothesis::H1 => levels_up[band],
                Hypothesis::H0 => levels_down[band],
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Density;
    use crate::rng::trial_rng;

    fn binary_cfg(gamma: f64) -> SprtNodeConfig {
        SprtNodeConfig::new(gamma, gamma, EmissionRule::Binary { b1: 1.0, b0: -1.0 }).unwrap()
    }

    fn quantized_cfg() -> SprtNodeConfig {
        SprtNodeConfig::new(
            5.0,
            5.0,
            EmissionRule::Quantized {
                levels_up: [1.0, 2.0, 3.0, 4.0],
                levels_down: [-1.0, -2.0, -3.0, -4.0],
                delta1: 1.0,
                delta0: 1.0,
            },
        )
        .unwrap()
    }

    fn unit_pair() -> HypothesisPair {
        HypothesisPair::new(GaussianModel::standard(), GaussianModel::new(1.0, 1.0).unwrap()).unwrap()
    }

    fn glr_cfg(emission: GlrEmissionRule) -> GlrNodeConfig {
        GlrNodeConfig {
            theta0: 0.0,
            theta1: 1.0,
            a1: 0.0,
            a2: 1.0,
            c: 0.01,
            theta_star: 0.5,
            sigma_sq: 1.0,
            boundary: Boundary::LogInverse,
            emission,
        }
    }

    #[test]
    fn sprt_deterministic_crossing() {
        let cfg = binary_cfg(5.0);
        let mut s = LocalNodeState::default();
        for step in 1..=10 {
            s = sprt_update_increment(s, 0.5, &cfg);
            if step < 10 {
                assert_eq!(s.decided, None);
            }
        }
        assert_eq!(s.decided, Some(Hypothesis::H1));
        assert_eq!(s.steps, 10);

        let s = LocalNodeState { w: 4.9, steps: 3, decided: None };
        let s = sprt_update_increment(s, 0.2, &cfg);
        assert_eq!(s.decided, Some(Hypothesis::H1));
        assert!((s.w - 5.1).abs() < 1e-12);
    }

    #[test]
    fn decision_never_flips() {
        let cfg = binary_cfg(1.0);
        let mut s = sprt_update_increment(LocalNodeState::default(), 1.5, &cfg);
        s = sprt_update_increment(s, -5.0, &cfg);
        assert_eq!(s.decided, Some(Hypothesis::H1));
        assert_eq!(sprt_emission(&s, &cfg), -1.0);
    }

    #[test]
    fn emission_examples() {
        let s = LocalNodeState { w: 4.0, ..Default::default() };
        assert_eq!(sprt_emission(&s, &binary_cfg(5.0)), 0.0);
        let q = quantized_cfg();
        assert_eq!(sprt_emission(&LocalNodeState { w: 6.5, ..Default::default() }, &q), 2.0);
        assert_eq!(sprt_emission(&LocalNodeState { w: 100.0, ..Default::default() }, &q), 4.0);
        assert_eq!(sprt_emission(&LocalNodeState { w: 5.0, ..Default::default() }, &q), 1.0);
        assert_eq!(sprt_emission(&LocalNodeState { w: -7.2, ..Default::default() }, &q), -3.0);
        assert_eq!(sprt_emission(&LocalNodeState { w: -4.99, ..Default::default() }, &q), 0.0);
    }

    #[test]
    fn wald_bound_single_node() {
        let gamma = 4.0;
        let cfg = binary_cfg(gamma);
        let pair = unit_pair();
        let runs = 100_000u64;
        let mut misses = 0u64;
        for i in 0..runs {
            let mut rng = trial_rng(99, i);
            let mut s = LocalNodeState::default();
            while s.decided.is_none() {
                s = sprt_update(s, pair.f1().sample(&mut rng), &pair, &cfg);
            }
            misses += (s.decided == Some(Hypothesis::H0)) as u64;
        }
        let p = misses as f64 / runs as f64;
        let se = (p * (1.0 - p) / runs as f64).sqrt().max(1.0 / runs as f64);
        assert!(p <= (-gamma).exp() + 3.0 * se, "p={p}");
    }

    #[test]
    fn glr_examples() {
        let cfg = glr_cfg(GlrEmissionRule::Binary { b1: 1.0, b0: -1.0 });
        let s = glr_update(GlrNodeState::default(), 0.5, 1.0, &cfg);
        assert_eq!(s.theta_hat, 0.5);
        assert!((s.w - 0.125).abs() < 1e-15);
        let s = glr_update(GlrNodeState::default(), 5.0, 1.0, &cfg);
        assert_eq!(s.theta_hat, 1.0);
    }

    #[test]
    fn glr_statistic_matches_naive_sums() {
        let cfg = glr_cfg(GlrEmissionRule::Binary { b1: 1.0, b0: -1.0 });
        // 20 observations with mean exactly 0.5
        let xs: Vec<f64> = (0..20)
            .map(|i| 0.5 + if i % 2 == 0 { 0.3 + 0.01 * i as f64 } else { -(0.3 + 0.01 * (i - 1) as f64) })
            .collect();
        assert!((xs.iter().sum::<f64>() / 20.0 - 0.5).abs() < 1e-12);
        let mut s = GlrNodeState::default();
        for &x in &xs {
            s = glr_update(s, x, 1.0, &cfg);
        }
        let th = s.theta_hat;
        let f = |m: f64| GaussianModel::new(m, 1.0).unwrap();
        let naive0: f64 = xs.iter().map(|&x| f(th).ln_pdf(x) - f(0.0).ln_pdf(x)).sum();
        let naive1: f64 = xs.iter().map(|&x| f(th).ln_pdf(x) - f(1.0).ln_pdf(x)).sum();
        assert!((s.w - naive0.max(naive1)).abs() < 1e-10);
    }

    #[test]
    fn glr_threshold_examples() {
        assert!((glr_threshold(10, 0.01) - 10f64.ln()).abs() < 1e-12);
        assert_eq!(glr_threshold(100, 0.01), 0.0);
        assert!((glr_threshold(1, 0.001) - 6.907755278982137).abs() < 1e-9);
    }

    #[test]
    fn decision_rule_and_theta_star() {
        assert_eq!(glr_decision(0.8, 0.5), Hypothesis::H1);
        assert_eq!(glr_decision(0.2, 0.5), Hypothesis::H0);
        assert_eq!(glr_decision(0.5, 0.5), Hypothesis::H1);
        assert_eq!(solve_theta_star(0.0, 1.0, 1.0).unwrap(), 0.5);
        assert_eq!(solve_theta_star(0.0, 0.5, 1.0).unwrap(), 0.25);
        assert!(solve_theta_star(1.0, 0.0, 1.0).is_err());
        let b = solve_theta_star_bisection(0.0, 1.0, |t| GaussianModel::new(t, 1.0).unwrap()).unwrap();
        assert!((b - 0.5).abs() < 1e-9);
    }

    #[test]
    fn glr_tie_branches_both_reachable() {
        let cfg = GlrNodeConfig { c: 0.05, ..glr_cfg(GlrEmissionRule::Binary { b1: 1.0, b0: -1.0 }) };
        let mut seen = [false; 2];
        for i in 0..2000u64 {
            let mut rng = trial_rng(3, i);
            let law = GaussianModel::new(0.5, 1.0).unwrap();
            let mut s = GlrNodeState::default();
            while s.decided.is_none() {
                s = glr_update(s, law.sample(&mut rng), 1.0, &cfg);
            }
            seen[(s.decided == Some(Hypothesis::H1)) as usize] = true;
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn glr_interval_emission() {
        let cfg = GlrNodeConfig {
            c: 0.01,
            ..glr_cfg(GlrEmissionRule::IntervalQuantized {
                levels_up: [1.0, 2.0, 3.0, 4.0],
                levels_down: [-1.0, -2.0, -3.0, -4.0],
                delta: 0.25,
            })
        };
        // k·c = 0.1
        let edges = glr_interval_edges(10, &cfg, 0.25);
        let expect = [0.1f64, 0.075, 0.05, 0.025].map(|x| -x.ln());
        for (e, x) in edges.iter().zip(expect) {
            assert!((e - x).abs() < 1e-6);
        }
        let mut s = GlrNodeState { w: 2.7, decided: Some(Hypothesis::H1), theta_hat: 0.9, ..Default::default() };
        assert_eq!(glr_emission(&s, 10, &cfg), 2.0);
        s.w = 10.0;
        assert_eq!(glr_emission(&s, 10, &cfg), 4.0);
        s.decided = Some(Hypothesis::H0);
        assert_eq!(glr_emission(&s, 10, &cfg), -4.0);
        let quiet = GlrNodeState { w: 1.0, ..Default::default() };
        assert_eq!(glr_emission(&quiet, 10, &cfg), 0.0);
    }

    #[test]
    fn glr_config_validation() {
        let mut cfg = glr_cfg(GlrEmissionRule::IntervalQuantized {
            levels_up: [1.0, 2.0, 3.0, 4.0],
            levels_down: [-1.0, -2.0, -3.0, -4.0],
            delta: 0.4,
        });
        assert!(cfg.validate().is_err());
        cfg.emission = GlrEmissionRule::Binary { b1: 1.0, b0: -1.0 };
        assert!(cfg.validate().is_ok());
        cfg.theta_star = 2.0;
        assert!(cfg.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn silence_region_agrees(w in -20.0..20.0f64) {
                let s = LocalNodeState { w, ..Default::default() };
                let b = sprt_emission(&s, &binary_cfg(5.0));
                let q = sprt_emission(&s, &quantized_cfg());
                prop_assert_eq!(b == 0.0, q == 0.0);
                prop_assert_eq!(b == 0.0, -5.0 < w && w < 5.0);
            }

            #[test]
            fn band_monotone(w1 in 5.0..30.0f64, w2 in 5.0..30.0f64) {
                let (lo, hi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
                let q = quantized_cfg();
                let a = sprt_emission(&LocalNodeState { w: lo, ..Default::default() }, &q);
                let b = sprt_emission(&LocalNodeState { w: hi, ..Default::default() }, &q);
                prop_assert!(a <= b);
            }

            #[test]
            fn glr_nonnegative_and_order_free(xs in proptest::collection::vec(-3.0..4.0f64, 1..40)) {
                let cfg = glr_cfg(GlrEmissionRule::Binary { b1: 1.0, b0: -1.0 });
                let mut fwd = GlrNodeState::default();
                for &x in &xs { fwd = glr_update(fwd, x, 1.0, &cfg); prop_assert!(fwd.w >= -1e-12); }
                let mut rev = GlrNodeState::default();
                for &x in xs.iter().rev() { rev = glr_update(rev, x, 1.0, &cfg); }
                prop_assert!((fwd.theta_hat - rev.theta_hat).abs() < 1e-12);
                prop_assert!(fwd.theta_hat >= cfg.a1 && fwd.theta_hat <= cfg.a2);
            }
        }
    }
}
