//! Microgrid-cluster dispatch laboratory: a radial-network Markov-game
//! environment, risk-sensitive sequential trust-region training, baselines
//! and a reproducible experiment harness.

pub mod baselines;
pub mod env;
pub mod harness;
pub mod network;
pub mod nn;
pub mod trpo;
