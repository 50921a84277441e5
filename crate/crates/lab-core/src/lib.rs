//! A desk-scale reinforcement-learning laboratory for studying reward
//! estimation under corrupted stochastic rewards.
//!
//! The crate is organized around the pipeline it supports:
//!
//! - [`env`] — chain MDPs, a small gridworld, and a continuous point-mass
//!   task, all behind one [`env::Environment`] trait.
//! - [`noise`] — the three reward-corruption channels (additive Gaussian,
//!   uniform replacement, sparsification) plus their analytic moments.
//! - [`tabular`] — TD(0) value learning on chains with either the sampled
//!   reward or a sample-mean reward estimator in the bootstrap target.
//! - [`variance`] — Monte-Carlo verification of the variance identities
//!   that justify the estimator, and the reward-statistics protocol.
//! - [`nn`] — a minimal MLP with manual backprop, Adam, and the reward
//!   regression loss; parameters serialize to a flat binary format.
//! - [`agents`] — actor-critic training (A2C and a clipped surrogate
//!   objective) with interchangeable reward sources and GAE advantages.
//! - [`harness`] — suite configs, seeded execution, CSV persistence, and
//!   normalized-improvement scoring.

pub mod agents;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod noise;
pub mod rng;
pub mod tabular;
pub mod variance;

pub use error::LabError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, LabError>;
