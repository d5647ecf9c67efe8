//! Decentralized sequential detection over a Gaussian multiple-access channel.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod channel;
pub mod cli;
pub mod config;
pub mod distributions;
pub mod error;
pub mod exec;
pub mod fusion;
pub mod local_node;
pub mod montecarlo;
pub mod quadrature;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
