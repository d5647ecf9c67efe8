//! Primary-to-sensor observations and the sensor-to-fusion reporting MAC.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::distributions::{Density, GaussianModel, Hypothesis, HypothesisPair};
use crate::error::{invalid, Result};

/// Rayleigh fading: received power is exponential with the given mean,
/// redrawn once per trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rayleigh {
    pub mean_power: f64,
}

impl Rayleigh {
    pub fn new(mean_power: f64) -> Result<Self> {
        if !(mean_power > 0.0 && mean_power.is_finite()) {
            return Err(invalid(format!("fading mean power must be positive, got {mean_power}")));
        }
        Ok(Self { mean_power })
    }

    /// Median of the received power, `mean · ln 2`.
    pub fn median(&self) -> f64 {
        self.mean_power * std::f64::consts::LN_2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    /// Linear gain per node scaling the post-change mean shift.
    pub gains: Vec<f64>,
    pub fading: Option<Rayleigh>,
    /// Law of the fusion-center receiver noise `Z_k`.
    pub fc_noise: GaussianModel,
}

impl ChannelConfig {
    pub fn unit_gains(nodes: usize, fc_noise: GaussianModel) -> Self {
        Self { gains: vec![1.0; nodes], fading: None, fc_noise }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gains.is_empty() {
            return Err(invalid("channel needs at least one node"));
        }
        if self.gains.iter().any(|g| !g.is_finite()) {
            return Err(invalid("channel gains must be finite"));
        }
        self.fc_noise.validate()?;
        if let Some(f) = self.fading {
            Rayleigh::new(f.mean_power)?;
        }
        Ok(())
    }
}

/// Converts a gain in dB to the linear amplitude factor `10^(dB/20)`.
pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Law of one observation: f0 under H0, and under H1 the alternative whose
/// mean shift is scaled by `gain` (gain 1 reproduces f1, gain 0 gives f0).
pub fn observation_law(hypothesis: Hypothesis, gain: f64, pair: &HypothesisPair) -> GaussianModel {
    match hypothesis {
        Hypothesis::H0 => *pair.f0(),
        Hypothesis::H1 if gain == 0.0 => *pair.f0(),
        Hypothesis::H1 => GaussianModel {
            mean: pair.f0().mean + gain * (pair.f1().mean - pair.f0().mean),
            variance: pair.f1().variance,
        },
    }
}

pub fn observation<R: Rng + ?Sized>(hypothesis: Hypothesis, gain: f64, pair: &HypothesisPair, rng: &mut R) -> f64 {
    observation_law(hypothesis, gain, pair).sample(rng)
}

/// Physical-layer fusion: the fusion center sees the sum of all emissions plus noise.
pub fn mac_fuse(emissions: &[f64], z: f64) -> f64 {
    emissions.iter().sum::<f64>() + z
}

pub fn draw_fading_power<R: Rng + ?Sized>(fading: &Rayleigh, rng: &mut R) -> f64 {
    Exp::new(1.0 / fading.mean_power).expect("mean power validated positive").sample(rng)
}

/// Energy detector averaging `m` samples, low-SNR Gaussian approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyDetectorModel {
    pub m: u32,
    pub sigma_sq: f64,
    pub received_power: f64,
}

/// Gaussian pair for `X − σ²`: f0 = N(0, 2σ⁴/M), f1 = N(P, 2(P+σ²)²/M).
pub fn energy_detector_pair(model: &EnergyDetectorModel) -> Result<HypothesisPair> {
    if model.m == 0 || !(model.sigma_sq > 0.0) || !(model.received_power >= 0.0) {
        return Err(invalid(format!("invalid energy detector model {model:?}")));
    }
    let m = model.m as f64;
    let s2 = model.sigma_sq;
    let p = model.received_power;
    HypothesisPair::new(GaussianModel::new(0.0, 2.0 * s2 * s2 / m)?, GaussianModel::new(p, 2.0 * (p + s2).powi(2) / m)?)
}
