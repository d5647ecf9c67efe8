//! JSON scenario files and built-in presets.
//!
//! ```json
//! {
//!   "name": "example1",
//!   "algorithm": "dual_sprt",
//!   "nodes": [{"f0": {"mean": 0, "variance": 1}, "f1": {"mean": 1, "variance": 1}}, ...],
//!   "thresholds": {"gamma1": 8, "gamma0": 8, "beta1": 10, "beta0": 10},
//!   "fusion": {"mu1": 1, "mu0": 1},
//!   "emission": {"b1": 1, "b0": -1},
//!   "channel": {"fc_noise": {"mean": 0, "variance": 5}}
//! }
//! ```
//!
//! A node may give `gain_db` instead of `f1`: its H1 mean is then
//! `f0.mean + base_shift·10^(gain_db/20)`. When both are present `f1` wins.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{db_to_amplitude, ChannelConfig, Rayleigh};
use crate::distributions::{drift_stats, GaussianModel, Hypothesis, HypothesisPair};
use crate::error::{Error, Result};
use crate::fusion::{FusionAlgorithm, FusionConfig};
use crate::local_node::{solve_theta_star, Boundary, EmissionRule, GlrEmissionRule, GlrNodeConfig, SprtNodeConfig};
use crate::scenario::{NodeSpec, NodeTest, Scenario};

pub const PRESETS: [&str; 4] = ["example1", "example2", "csprt-fig3", "glr-fading"];
pub const FALLBACK_MAX_STEPS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    DualSprt,
    SprtCsprt,
    GlrSprt,
    GlrCsprt,
}

impl Algorithm {
    fn fusion(self) -> FusionAlgorithm {
        match self {
            Algorithm::DualSprt | Algorithm::GlrSprt => FusionAlgorithm::DualSprt,
            Algorithm::SprtCsprt | Algorithm::GlrCsprt => FusionAlgorithm::Csprt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeFile {
    pub f0: GaussianSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<GaussianSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_db: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default)]
    pub gamma1: Option<f64>,
    #[serde(default)]
    pub gamma0: Option<f64>,
    pub beta1: f64,
    pub beta0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionFile {
    pub mu1: f64,
    pub mu0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmissionFile {
    #[serde(default = "one")]
    pub b1: f64,
    #[serde(default = "minus_one")]
    pub b0: f64,
    #[serde(default = "default_up")]
    pub levels_up: [f64; 4],
    #[serde(default = "default_down")]
    pub levels_down: [f64; 4],
    /// Band widths for quantized SPRT nodes; default to each node's LLR drift magnitude.
    #[serde(default)]
    pub delta1: Option<f64>,
    #[serde(default)]
    pub delta0: Option<f64>,
}

impl Default for EmissionFile {
    fn default() -> Self {
        Self { b1: 1.0, b0: -1.0, levels_up: default_up(), levels_down: default_down(), delta1: None, delta0: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlrFile {
    #[serde(default)]
    pub theta0: f64,
    pub theta1: f64,
    /// Defaults to the KL-balance point.
    #[serde(default)]
    pub theta_star: Option<f64>,
    pub a1: f64,
    pub a2: f64,
    pub c: f64,
    #[serde(default = "quarter")]
    pub delta: f64,
    pub sigma_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FadingFile {
    pub mean_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFile {
    pub fc_noise: GaussianSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fading: Option<FadingFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub algorithm: Algorithm,
    pub nodes: Vec<NodeFile>,
    pub thresholds: Thresholds,
    pub fusion: FusionFile,
    #[serde(default)]
    pub emission: EmissionFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glr: Option<GlrFile>,
    pub channel: ChannelFile,
    /// H1 mean shift at 0 dB for nodes given by `gain_db`.
    #[serde(default = "one")]
    pub base_shift: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
}

fn one() -> f64 {
    1.0
}
fn minus_one() -> f64 {
    -1.0
}
fn quarter() -> f64 {
    0.25
}
fn default_up() -> [f64; 4] {
    [1.0, 2.0, 3.0, 4.0]
}
fn default_down() -> [f64; 4] {
    [-1.0, -2.0, -3.0, -4.0]
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

fn invariant(msg: impl std::fmt::Display) -> Error {
    Error::Invariant(msg.to_string())
}

fn gaussian(spec: &GaussianSpec, what: &str) -> Result<GaussianModel> {
    GaussianModel::new(spec.mean, spec.variance).map_err(|e| invariant(format!("{what}: {e}")))
}

impl ScenarioFile {
    /// Builds and validates the scenario. Structural problems (missing pieces,
    /// list-length mismatches) are schema errors; out-of-range values are
    /// invariant errors.
    pub fn build(&self) -> Result<Scenario> {
        let l = self.nodes.len();
        if l == 0 {
            return Err(schema("nodes[] is empty"));
        }
        if let Some(g) = &self.channel.gains {
            if g.len() != l {
                return Err(schema(format!("channel.gains has {} entries for {l} nodes", g.len())));
            }
        }
        let is_glr = matches!(self.algorithm, Algorithm::GlrSprt | Algorithm::GlrCsprt);
        if is_glr && self.glr.is_none() {
            return Err(schema("GLR algorithms need a \"glr\" section"));
        }
        if !is_glr && (self.thresholds.gamma1.is_none() || self.thresholds.gamma0.is_none()) {
            return Err(schema("SPRT nodes need thresholds.gamma1 and thresholds.gamma0"));
        }

        let mut pairs = Vec::with_capacity(l);
        for (i, node) in self.nodes.iter().enumerate() {
            let f0 = gaussian(&node.f0, &format!("nodes[{i}].f0"))?;
            let f1 = match (&node.f1, node.gain_db) {
                (Some(f1), _) => gaussian(f1, &format!("nodes[{i}].f1"))?,
                (None, Some(db)) => f0.shifted(self.base_shift * db_to_amplitude(db)),
                (None, None) if is_glr => {
                    let g = self.glr.as_ref().expect("checked above");
                    GaussianModel::new(f0.mean + g.theta1 - g.theta0, f0.variance)
                        .map_err(|e| invariant(format!("nodes[{i}]: {e}")))?
                }
                (None, None) => return Err(schema(format!("nodes[{i}] needs f1 or gain_db"))),
            };
            pairs.push(HypothesisPair::new(f0, f1).map_err(|e| invariant(format!("nodes[{i}]: {e}")))?);
        }

        let e = &self.emission;
        let mut nodes = Vec::with_capacity(l);
        for pair in pairs {
            let test = match self.algorithm {
                Algorithm::DualSprt | Algorithm::SprtCsprt => {
                    let emission = if self.algorithm == Algorithm::DualSprt {
                        EmissionRule::Binary { b1: e.b1, b0: e.b0 }
                    } else {
                        let (d1, _) = drift_stats(&pair, Hypothesis::H1);
                        let (d0, _) = drift_stats(&pair, Hypothesis::H0);
                        EmissionRule::Quantized {
                            levels_up: e.levels_up,
                            levels_down: e.levels_down,
                            delta1: e.delta1.unwrap_or(d1.abs()),
                            delta0: e.delta0.unwrap_or(d0.abs()),
                        }
                    };
                    let t = &self.thresholds;
                    NodeTest::Sprt(SprtNodeConfig {
                        gamma1: t.gamma1.expect("checked above"),
                        gamma0: t.gamma0.expect("checked above"),
                        emission,
                    })
                }
                Algorithm::GlrSprt | Algorithm::GlrCsprt => {
                    let g = self.glr.as_ref().expect("checked above");
                    let theta_star = match g.theta_star {
                        Some(t) => t,
                        None => solve_theta_star(g.theta0, g.theta1, g.sigma_sq).map_err(invariant)?,
                    };
                    let emission = if self.algorithm == Algorithm::GlrSprt {
                        GlrEmissionRule::Binary { b1: e.b1, b0: e.b0 }
                    } else {
                        GlrEmissionRule::IntervalQuantized {
                            levels_up: e.levels_up,
                            levels_down: e.levels_down,
                            delta: g.delta,
                        }
                    };
                    NodeTest::Glr(GlrNodeConfig {
                        theta0: g.theta0,
                        theta1: g.theta1,
                        a1: g.a1,
                        a2: g.a2,
                        c: g.c,
                        theta_star,
                        sigma_sq: g.sigma_sq,
                        boundary: Boundary::LogInverse,
                        emission,
                    })
                }
            };
            nodes.push(NodeSpec { pair, test });
        }

        let fc_noise = gaussian(&self.channel.fc_noise, "channel.fc_noise")?;
        let fading = match self.channel.fading {
            Some(f) => Some(Rayleigh::new(f.mean_power).map_err(|e| invariant(format!("channel.fading: {e}")))?),
            None => None,
        };
        let channel =
            ChannelConfig { gains: self.channel.gains.clone().unwrap_or_else(|| vec![1.0; l]), fading, fc_noise };
        let t = &self.thresholds;
        let fusion = FusionConfig {
            mu1: self.fusion.mu1,
            mu0: self.fusion.mu0,
            beta1: t.beta1,
            beta0: t.beta0,
            noise: fc_noise,
            algorithm: self.algorithm.fusion(),
        };
        let mut scenario = Scenario {
            name: self.name.clone(),
            nodes,
            channel,
            fusion,
            max_steps: self.max_steps.unwrap_or(FALLBACK_MAX_STEPS),
        };
        scenario.validate().map_err(|e| match e {
            Error::Invariant(m) => Error::Invariant(m),
            other => invariant(other),
        })?;
        if self.max_steps.is_none() {
            scenario.max_steps = crate::montecarlo::default_max_steps(&scenario);
        }
        Ok(scenario)
    }
}

/// Parses a scenario document; syntax and type errors report line and column.
pub fn parse_scenario(text: &str) -> Result<ScenarioFile> {
    serde_json::from_str(text).map_err(|e| schema(format!("line {}, column {}: {e}", e.line(), e.column())))
}

/// Loads a preset by name, or a JSON file by path.
pub fn load_scenario(path_or_preset: &str) -> Result<Scenario> {
    load_scenario_file(path_or_preset)?.build()
}

pub fn load_scenario_file(path_or_preset: &str) -> Result<ScenarioFile> {
    if let Some(p) = preset(path_or_preset) {
        return Ok(p);
    }
    let path = Path::new(path_or_preset);
    let text = std::fs::read_to_string(path).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn gauss(mean: f64, variance: f64) -> GaussianSpec {
    GaussianSpec { mean, variance }
}

fn sprt_nodes(means: &[f64]) -> Vec<NodeFile> {
    means.iter().map(|&m| NodeFile { f0: gauss(0.0, 1.0), f1: Some(gauss(m, 1.0)), gain_db: None }).collect()
}

const EXAMPLE2_MEANS: [f64; 5] = [1.0, 0.84, 0.75, 0.63, 0.5];

/// Built-in scenarios. Node thresholds are tuned for the default β range
/// of 5–25; every preset runs with μ1 = μ0 = 1.
pub fn preset(name: &str) -> Option<ScenarioFile> {
    let fc5 = ChannelFile { fc_noise: gauss(0.0, 5.0), gains: None, fading: None };
    let base = |name: &str, algorithm, nodes, gamma: f64, channel| ScenarioFile {
        name: name.into(),
        algorithm,
        nodes,
        thresholds: Thresholds { gamma1: Some(gamma), gamma0: Some(gamma), beta1: 10.0, beta0: 10.0 },
        fusion: FusionFile { mu1: 1.0, mu0: 1.0 },
        emission: EmissionFile::default(),
        glr: None,
        channel,
        base_shift: 1.0,
        max_steps: None,
    };
    match name {
        "example1" => Some(base(name, Algorithm::DualSprt, sprt_nodes(&[1.0; 5]), EXAMPLE1_GAMMA, fc5)),
        "example2" => Some(base(name, Algorithm::DualSprt, sprt_nodes(&EXAMPLE2_MEANS), EXAMPLE2_GAMMA, fc5)),
        "csprt-fig3" => Some(base(name, Algorithm::SprtCsprt, sprt_nodes(&EXAMPLE2_MEANS), CSPRT_GAMMA, fc5)),
        "glr-fading" => {
            let theta1 = std::f64::consts::LN_2;
            let nodes = (0..5).map(|_| NodeFile { f0: gauss(0.0, 1.0), f1: None, gain_db: None }).collect();
            let mut s = base(
                name,
                Algorithm::GlrCsprt,
                nodes,
                0.0,
                ChannelFile { fc_noise: gauss(0.0, 1.0), gains: None, fading: Some(FadingFile { mean_power: 1.0 }) },
            );
            s.thresholds.gamma1 = None;
            s.thresholds.gamma0 = None;
            s.glr = Some(GlrFile {
                theta0: 0.0,
                theta1,
                theta_star: None,
                a1: 0.0,
                a2: GLR_A2,
                c: GLR_C,
                delta: 0.25,
                sigma_sq: 1.0,
            });
            Some(s)
        }
        _ => None,
    }
}

pub const EXAMPLE1_GAMMA: f64 = 8.0;
pub const EXAMPLE2_GAMMA: f64 = 8.0;
pub const CSPRT_GAMMA: f64 = 10.0;
pub const GLR_C: f64 = 0.05;
pub const GLR_A2: f64 = 5.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example1_preset() {
        let s = load_scenario("example1").unwrap();
        assert_eq!(s.len(), 5);
        for n in &s.nodes {
            assert_eq!(*n.pair.f0(), GaussianModel::standard());
            assert_eq!(*n.pair.f1(), GaussianModel::new(1.0, 1.0).unwrap());
            let NodeTest::Sprt(cfg) = &n.test else { panic!() };
            assert_eq!(cfg.emission, EmissionRule::Binary { b1: 1.0, b0: -1.0 });
        }
    }

    #[test]
    fn example2_preset() {
        let s = load_scenario("example2").unwrap();
        let means: Vec<f64> = s.nodes.iter().map(|n| n.pair.f1().mean).collect();
        assert_eq!(means, EXAMPLE2_MEANS.to_vec());
    }

    #[test]
    fn all_presets_build() {
        for p in PRESETS {
            let s = load_scenario(p).unwrap();
            assert!(s.max_steps > 0, "{p}");
        }
        let g = load_scenario("glr-fading").unwrap();
        assert!(g.channel.fading.is_some());
        let NodeTest::Glr(cfg) = &g.nodes[0].test else { panic!() };
        assert!((cfg.theta_star - std::f64::consts::LN_2 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn gain_length_mismatch_is_schema_error() {
        let mut f = preset("example1").unwrap();
        f.channel.gains = Some(vec![1.0; 4]);
        assert!(matches!(f.build(), Err(Error::Schema(_))));
    }

    #[test]
    fn bad_values_are_invariant_errors() {
        let mut f = preset("example1").unwrap();
        f.channel.fc_noise.variance = 0.0;
        assert!(matches!(f.build(), Err(Error::Invariant(_))));
        let mut f = preset("example1").unwrap();
        f.thresholds.beta1 = -1.0;
        assert!(matches!(f.build(), Err(Error::Invariant(_))));
    }

    #[test]
    fn json_round_trip_and_gain_db() {
        let f = preset("csprt-fig3").unwrap();
        let text = serde_json::to_string_pretty(&f).unwrap();
        assert_eq!(parse_scenario(&text).unwrap(), f);
        let doc = r#"{
            "name": "db",
            "algorithm": "dual_sprt",
            "nodes": [{"f0": {"mean": 0, "variance": 1}, "gain_db": -6},
                      {"f0": {"mean": 0, "variance": 1}, "gain_db": -6, "f1": {"mean": 0.7, "variance": 1}}],
            "thresholds": {"gamma1": 3, "gamma0": 3, "beta1": 5, "beta0": 5},
            "fusion": {"mu1": 1, "mu0": 1},
            "channel": {"fc_noise": {"mean": 0, "variance": 2}},
            "max_steps": 500
        }"#;
        let s = parse_scenario(doc).unwrap().build().unwrap();
        assert!((s.nodes[0].pair.f1().mean - 0.501187).abs() < 1e-6);
        assert_eq!(s.nodes[1].pair.f1().mean, 0.7);
        assert_eq!(s.max_steps, 500);
    }

    #[test]
    fn syntax_errors_carry_location() {
        let err = parse_scenario("{\n  \"name\": 3\n}").unwrap_err();
        let Error::Schema(m) = err else { panic!() };
        assert!(m.starts_with("line 2"), "{m}");
        assert!(matches!(parse_scenario(r#"{"name": "x", "bogus": 1}"#), Err(Error::Schema(_))));
    }
}
