//! Full experiment description: nodes, channel, fusion center and horizon.

use crate::channel::ChannelConfig;
use crate::distributions::HypothesisPair;
use crate::error::{Error, Result};
use crate::fusion::{FusionAlgorithm, FusionConfig};
use crate::local_node::{EmissionRule, GlrEmissionRule, GlrNodeConfig, SprtNodeConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum NodeTest {
    Sprt(SprtNodeConfig),
    Glr(GlrNodeConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    /// Laws the node's test is designed for (and, with unit gain, the truth).
    pub pair: HypothesisPair,
    pub test: NodeTest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub nodes: Vec<NodeSpec>,
    pub channel: ChannelConfig,
    pub fusion: FusionConfig,
    pub max_steps: u64,
}

impl Scenario {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Invariant("scenario needs at least one node".into()));
        }
        if self.channel.gains.len() != self.nodes.len() {
            return Err(Error::Invariant(format!(
                "{} channel gains for {} nodes",
                self.channel.gains.len(),
                self.nodes.len()
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::Invariant("max_steps must be positive".into()));
        }
        let wrap = |l: usize, e: Error| Error::Invariant(format!("node {l}: {e}"));
        for (l, node) in self.nodes.iter().enumerate() {
            match &node.test {
                NodeTest::Sprt(cfg) => {
                    cfg.validate().map_err(|e| wrap(l, e))?;
                    if node.pair.is_degenerate() {
                        return Err(wrap(l, Error::InvalidParameter("f1 equals f0".into())));
                    }
                }
                NodeTest::Glr(cfg) => cfg.validate().map_err(|e| wrap(l, e))?,
            }
        }
        self.channel.validate().map_err(|e| Error::Invariant(format!("channel: {e}")))?;
        self.fusion.validate().map_err(|e| Error::Invariant(format!("fusion: {e}")))?;
        if self.fusion.noise != self.channel.fc_noise {
            return Err(Error::Invariant("fusion noise model differs from channel fc_noise".into()));
        }
        Ok(())
    }

    pub fn algorithm(&self) -> FusionAlgorithm {
        self.fusion.algorithm
    }

    /// Same scenario with `β1 = β0 = beta`.
    pub fn with_beta(&self, beta: f64) -> Self {
        Self { fusion: self.fusion.with_beta(beta), ..self.clone() }
    }

    /// Same scenario with every SPRT node using `γ1 = γ0 = gamma`.
    pub fn with_node_gamma(&self, gamma: f64) -> Self {
        let mut s = self.clone();
        for node in &mut s.nodes {
            if let NodeTest::Sprt(cfg) = &mut node.test {
                cfg.gamma1 = gamma;
                cfg.gamma0 = gamma;
            }
        }
        s
    }

    /// Same scenario with every GLR node using cost parameter `c`.
    pub fn with_glr_cost(&self, c: f64) -> Self {
        let mut s = self.clone();
        for node in &mut s.nodes {
            if let NodeTest::Glr(cfg) = &mut node.test {
                cfg.c = c;
            }
        }
        s
    }

    pub fn sprt_configs(&self) -> Option<Vec<&SprtNodeConfig>> {
        self.nodes
            .iter()
            .map(|n| match &n.test {
                NodeTest::Sprt(c) => Some(c),
                NodeTest::Glr(_) => None,
            })
            .collect()
    }

    pub fn all_binary(&self) -> bool {
        self.nodes.iter().all(|n| match &n.test {
            NodeTest::Sprt(c) => matches!(c.emission, EmissionRule::Binary { .. }),
            NodeTest::Glr(c) => matches!(c.emission, GlrEmissionRule::Binary { .. }),
        })
    }
}
