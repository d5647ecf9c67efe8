//! Fusion-center sequential tests on the MAC output `Y_k`.
//!
//! `DualSprt` runs a two-sided SPRT on log g_{μ1}(Y)/g_{−μ0}(Y). `Csprt`
//! runs two one-sided CUSUM-style statistics, `F¹` clamped at zero from below
//! and `F⁰` clamped at zero from above, each comparing a signal hypothesis
//! against pure receiver noise.
//!
//! Increments are the exact Gaussian log-density ratios, so they carry the
//! 1/σ² factor. A statistic written as "2μY" without it corresponds to these
//! thresholds multiplied by σ².

use serde::{Deserialize, Serialize};

use crate::distributions::{GaussianModel, Hypothesis};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionAlgorithm {
    DualSprt,
    Csprt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub mu1: f64,
    pub mu0: f64,
    pub beta1: f64,
    pub beta0: f64,
    pub noise: GaussianModel,
    pub algorithm: FusionAlgorithm,
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu1", self.mu1), ("mu0", self.mu0), ("beta1", self.beta1), ("beta0", self.beta0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("fusion parameter {name} must be positive, got {v}")));
            }
        }
        self.noise.validate()
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        Self { beta1: beta, beta0: beta, ..*self }
    }

    /// Slope of the (linear) DualSPRT increment in `y`.
    pub fn dual_slope(&self) -> f64 {
        (self.mu1 + self.mu0) / self.noise.variance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsprtSide {
    Up,
    Down,
}

/// log g_{μ1}(y) − log g_{−μ0}(y).
pub fn fc_llr_dual(y: f64, cfg: &FusionConfig) -> f64 {
    let u = y - cfg.noise.mean;
    (2.0 * u * (cfg.mu1 + cfg.mu0) + cfg.mu0 * cfg.mu0 - cfg.mu1 * cfg.mu1) / (2.0 * cfg.noise.variance)
}

/// Up: log g_{μ1}(y) − log g_Z(y). Down: log g_Z(y) − log g_{−μ0}(y).
pub fn fc_llr_csprt(y: f64, cfg: &FusionConfig, side: CsprtSide) -> f64 {
    let u = y - cfg.noise.mean;
    let s2 = 2.0 * cfg.noise.variance;
    match side {
        CsprtSide::Up => (2.0 * cfg.mu1 * u - cfg.mu1 * cfg.mu1) / s2,
        CsprtSide::Down => (2.0 * cfg.mu0 * u + cfg.mu0 * cfg.mu0) / s2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FusionStatistic {
    DualSprt { f: f64 },
    Csprt { f1: f64, f0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionState {
    pub statistic: FusionStatistic,
    pub steps: u64,
    pub decision: Option<Hypothesis>,
}

impl FusionState {
    pub fn new(algorithm: FusionAlgorithm) -> Self {
        let statistic = match algorithm {
            FusionAlgorithm::DualSprt => FusionStatistic::DualSprt { f: 0.0 },
            FusionAlgorithm::Csprt => FusionStatistic::Csprt { f1: 0.0, f0: 0.0 },
        };
        Self { statistic, steps: 0, decision: None }
    }
}

/// One fusion-center update. A simultaneous crossing of both CSPRT
/// thresholds resolves to H1.
pub fn fusion_step(state: FusionState, y: f64, cfg: &FusionConfig) -> Result<FusionState> {
    if state.decision.is_some() {
        return Err(Error::InvalidParameter("fusion center stepped after deciding".into()));
    }
    let (statistic, decision) = match state.statistic {
        FusionStatistic::DualSprt { f } => {
            let f = f + fc_llr_dual(y, cfg);
            let d = if f >= cfg.beta1 {
                Some(Hypothesis::H1)
            } else if f <= -cfg.beta0 {
                Some(Hypothesis::H0)
            } else {
                None
            };
            (FusionStatistic::DualSprt { f }, d)
        }
        FusionStatistic::Csprt { f1, f0 } => {
            let f1 = (f1 + fc_llr_csprt(y, cfg, CsprtSide::Up)).max(0.0);
            let f0 = (f0 + fc_llr_csprt(y, cfg, CsprtSide::Down)).min(0.0);
            let d = if f1 >= cfg.beta1 {
                Some(Hypothesis::H1)
            } else if f0 <= -cfg.beta0 {
                Some(Hypothesis::H0)
            } else {
                None
            };
            (FusionStatistic::Csprt { f1, f0 }, d)
        }
    };
    Ok(FusionState { statistic, steps: state.steps + 1, decision })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Density;
    use crate::rng::trial_rng;

    fn cfg(mu: f64, var: f64, beta: f64, algorithm: FusionAlgorithm) -> FusionConfig {
        FusionConfig {
            mu1: mu,
            mu0: mu,
            beta1: beta,
            beta0: beta,
            noise: GaussianModel::new(0.0, var).unwrap(),
            algorithm,
        }
    }

    #[test]
    fn dual_llr_examples() {
        let c = cfg(1.0, 1.0, 10.0, FusionAlgorithm::DualSprt);
        assert!((fc_llr_dual(1.0, &c) - 2.0).abs() < 1e-12);
        assert_eq!(fc_llr_dual(0.0, &c), 0.0);
        let c5 = cfg(1.0, 5.0, 10.0, FusionAlgorithm::DualSprt);
        assert!((fc_llr_dual(5.0, &c5) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dual_llr_matches_log_densities() {
        let c = FusionConfig { mu1: 0.7, mu0: 1.3, ..cfg(1.0, 2.5, 1.0, FusionAlgorithm::DualSprt) };
        for y in [-3.0, -0.2, 0.0, 1.1, 4.0] {
            let direct = c.noise.shifted(c.mu1).ln_pdf(y) - c.noise.shifted(-c.mu0).ln_pdf(y);
            assert!((fc_llr_dual(y, &c) - direct).abs() < 1e-12);
            let up = c.noise.shifted(c.mu1).ln_pdf(y) - c.noise.ln_pdf(y);
            let down = c.noise.ln_pdf(y) - c.noise.shifted(-c.mu0).ln_pdf(y);
            assert!((fc_llr_csprt(y, &c, CsprtSide::Up) - up).abs() < 1e-12);
            assert!((fc_llr_csprt(y, &c, CsprtSide::Down) - down).abs() < 1e-12);
        }
    }

    #[test]
    fn csprt_llr_examples() {
        let c = cfg(1.0, 1.0, 10.0, FusionAlgorithm::Csprt);
        assert!((fc_llr_csprt(1.0, &c, CsprtSide::Up) - 0.5).abs() < 1e-15);
        assert_eq!(fc_llr_csprt(0.5, &c, CsprtSide::Up), 0.0);
        assert!((fc_llr_csprt(-1.0, &c, CsprtSide::Down) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn csprt_clamps_upper_statistic() {
        let c = cfg(1.0, 1.0, 10.0, FusionAlgorithm::Csprt);
        // llr_up(y = -0.5) = -1
        let mut s = FusionState::new(FusionAlgorithm::Csprt);
        for _ in 0..20 {
            s = fusion_step(s, -0.5, &c).unwrap();
            let FusionStatistic::Csprt { f1, f0 } = s.statistic else { unreachable!() };
            assert_eq!(f1, 0.0);
            assert!(f0 <= 0.0);
            if s.decision.is_some() {
                break;
            }
        }
    }

    #[test]
    fn dual_deterministic_crossing() {
        let c = cfg(1.0, 1.0, 10.0, FusionAlgorithm::DualSprt);
        let mut s = FusionState::new(FusionAlgorithm::DualSprt);
        while s.decision.is_none() {
            s = fusion_step(s, 1.0, &c).unwrap();
        }
        assert_eq!(s.steps, 5);
        assert_eq!(s.decision, Some(Hypothesis::H1));
        assert!(fusion_step(s, 1.0, &c).is_err());
    }

    #[test]
    fn simultaneous_crossing_goes_to_h1() {
        // tiny thresholds with mu1 small and mu0 large: a single y can push both
        let c = FusionConfig {
            mu1: 0.1,
            mu0: 10.0,
            beta1: 1e-6,
            beta0: 1e-6,
            ..cfg(1.0, 1.0, 1.0, FusionAlgorithm::Csprt)
        };
        let y = -9.0;
        assert!(fc_llr_csprt(y, &c, CsprtSide::Down) < 0.0);
        let state = FusionState { statistic: FusionStatistic::Csprt { f1: 1.0, f0: 0.0 }, steps: 0, decision: None };
        let s = fusion_step(state, y, &c).unwrap();
        let FusionStatistic::Csprt { f1, f0 } = s.statistic else { unreachable!() };
        if f1 >= c.beta1 && f0 <= -c.beta0 {
            assert_eq!(s.decision, Some(Hypothesis::H1));
        }
        let both = FusionState { statistic: FusionStatistic::Csprt { f1: 5.0, f0: -5.0 }, steps: 0, decision: None };
        let s = fusion_step(both, 0.0, &cfg(1.0, 1.0, 1.0, FusionAlgorithm::Csprt)).unwrap();
        assert_eq!(s.decision, Some(Hypothesis::H1));
    }

    #[test]
    fn dual_statistic_is_running_sum() {
        let c = cfg(1.0, 5.0, 1e9, FusionAlgorithm::DualSprt);
        let mut rng = trial_rng(4, 0);
        let mut s = FusionState::new(FusionAlgorithm::DualSprt);
        let mut sum = 0.0;
        for _ in 0..500 {
            let y = c.noise.sample(&mut rng) + 0.3;
            sum += fc_llr_dual(y, &c);
            s = fusion_step(s, y, &c).unwrap();
        }
        assert_eq!(s.statistic, FusionStatistic::DualSprt { f: sum });
    }

    #[test]
    fn noise_only_drives_csprt_toward_zero() {
        let c = cfg(1.0, 5.0, 10.0, FusionAlgorithm::Csprt);
        let mut rng = trial_rng(8, 0);
        let (mut up, mut down) = (0.0, 0.0);
        let n = 1_000_000;
        for _ in 0..n {
            let y = c.noise.sample(&mut rng);
            up += fc_llr_csprt(y, &c, CsprtSide::Up);
            down += fc_llr_csprt(y, &c, CsprtSide::Down);
        }
        assert!(up / (n as f64) < 0.0);
        assert!(down / (n as f64) > 0.0);
    }

    #[test]
    fn clamped_statistic_crosses_no_later_than_unclamped_sum() {
        // common random numbers: negative-drift prefix, then all five nodes emit +1
        let c = cfg(1.0, 5.0, 8.0, FusionAlgorithm::Csprt);
        for seed in 0..200u64 {
            let mut rng = trial_rng(21, seed);
            let ys: Vec<f64> = (0..2000).map(|k| c.noise.sample(&mut rng) + if k < 30 { -1.0 } else { 5.0 }).collect();
            let mut s = FusionState::new(FusionAlgorithm::Csprt);
            for &y in &ys {
                s = fusion_step(s, y, &c).unwrap();
                if s.decision.is_some() {
                    break;
                }
            }
            let mut sum = 0.0;
            let unclamped = ys
                .iter()
                .position(|&y| {
                    sum += fc_llr_csprt(y, &c, CsprtSide::Up);
                    sum >= c.beta1
                })
                .map(|i| i as u64 + 1);
            if let (Some(Hypothesis::H1), Some(t)) = (s.decision, unclamped) {
                assert!(s.steps <= t, "seed {seed}: clamped {} unclamped {t}", s.steps);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn csprt_clamps_hold(ys in proptest::collection::vec(-10.0..10.0f64, 1..100)) {
                let c = cfg(1.0, 2.0, 1e9, FusionAlgorithm::Csprt);
                let mut s = FusionState::new(FusionAlgorithm::Csprt);
                for y in ys {
                    s = fusion_step(s, y, &c).unwrap();
                    let FusionStatistic::Csprt { f1, f0 } = s.statistic else { unreachable!() };
                    prop_assert!(f1 >= 0.0 && f0 <= 0.0);
                }
            }
        }
    }
}
