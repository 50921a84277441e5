//! Environment contract and the desk-scale environments.

mod chain;
mod grid;
mod pointmass;

pub use chain::{ChainEnv, ChainMdp};
pub use grid::GridWorld;
pub use pointmass::PointMass;

use crate::error::LabError;
use crate::Result;
use rand_chacha::ChaCha8Rng;

/// An agent action: a discrete index or a continuous vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

/// Observation of a state: a feature vector plus, for tabular
/// environments, the state index.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRepr {
    pub index: Option<usize>,
    pub features: Vec<f64>,
}

impl StateRepr {
    pub fn tabular(index: usize, features: Vec<f64>) -> Self {
        StateRepr {
            index: Some(index),
            features,
        }
    }

    pub fn continuous(features: Vec<f64>) -> Self {
        StateRepr {
            index: None,
            features,
        }
    }
}

/// One environment step. `reward_observed` equals `reward_true` until a
/// noise channel rewrites it; agents must only ever read `reward_observed`,
/// while `reward_true` is carried for evaluation and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTuple {
    pub state: StateRepr,
    pub action: Action,
    pub next_state: StateRepr,
    pub reward_true: f64,
    pub reward_observed: f64,
    pub terminal: bool,
}

/// Shape of the action space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous { dim: usize, low: f64, high: f64 },
}

/// A single-threaded episodic environment. Instances own no RNG; the
/// caller passes the stream so that seeding stays in one place.
pub trait Environment {
    /// Start a new episode and return the initial state.
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> StateRepr;
    /// Advance one step. Panics if called on a terminal environment.
    fn step(&mut self, action: &Action, rng: &mut ChaCha8Rng) -> TransitionTuple;
    fn current_state(&self) -> StateRepr;
    fn is_terminal(&self) -> bool;
    fn observation_dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    /// Number of states for tabular environments, `None` otherwise.
    fn state_count(&self) -> Option<usize> {
        None
    }
}

/// Environment presets addressable by string id from the CLI and configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Chain5,
    Chain10,
    Grid5,
    PointMass,
}

impl Preset {
    pub fn parse(id: &str) -> Result<Preset> {
        match id {
            "chain5" => Ok(Preset::Chain5),
            "chain10" => Ok(Preset::Chain10),
            "grid5" => Ok(Preset::Grid5),
            "pointmass" => Ok(Preset::PointMass),
            other => Err(LabError::UnknownPreset(other.to_string())),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Preset::Chain5 => "chain5",
            Preset::Chain10 => "chain10",
            Preset::Grid5 => "grid5",
            Preset::PointMass => "pointmass",
        }
    }

    /// Build the preset with its default parameters. Chain rewards default
    /// to +1 with probability 0.5; use [`Preset::build_chain_env`] to
    /// override them.
    pub fn build(&self) -> Result<EnvKind> {
        match self {
            Preset::Chain5 => Ok(EnvKind::Chain(ChainEnv::new(ChainMdp::new(
                5, 1.0, 0.5, 1.0,
            )?))),
            Preset::Chain10 => Ok(EnvKind::Chain(ChainEnv::new(ChainMdp::new(
                10, 1.0, 0.5, 1.0,
            )?))),
            Preset::Grid5 => Ok(EnvKind::Grid(GridWorld::new(5, (0, 0), (4, 4), 50))),
            Preset::PointMass => Ok(EnvKind::PointMass(PointMass::new(0.1, 50))),
        }
    }

    /// Chain presets with explicit reward parameters.
    pub fn build_chain_env(&self, reward_value: f64, reward_prob: f64) -> Result<ChainEnv> {
        let steps = match self {
            Preset::Chain5 => 5,
            Preset::Chain10 => 10,
            _ => {
                return Err(LabError::InvalidParam(format!(
                    "{} is not a chain preset",
                    self.id()
                )))
            }
        };
        Ok(ChainEnv::new(ChainMdp::new(
            steps,
            reward_value,
            reward_prob,
            1.0,
        )?))
    }
}

/// Concrete environment dispatch. An enum keeps everything `Clone` and
/// avoids trait objects in the rollout loops.
#[derive(Debug, Clone)]
pub enum EnvKind {
    Chain(ChainEnv),
    Grid(GridWorld),
    PointMass(PointMass),
}

macro_rules! delegate {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            EnvKind::Chain($e) => $body,
            EnvKind::Grid($e) => $body,
            EnvKind::PointMass($e) => $body,
        }
    };
}

impl Environment for EnvKind {
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> StateRepr {
        delegate!(self, e => e.reset(rng))
    }
    fn step(&mut self, action: &Action, rng: &mut ChaCha8Rng) -> TransitionTuple {
        delegate!(self, e => e.step(action, rng))
    }
    fn current_state(&self) -> StateRepr {
        delegate!(self, e => e.current_state())
    }
    fn is_terminal(&self) -> bool {
        delegate!(self, e => e.is_terminal())
    }
    fn observation_dim(&self) -> usize {
        delegate!(self, e => e.observation_dim())
    }
    fn action_space(&self) -> ActionSpace {
        delegate!(self, e => e.action_space())
    }
    fn state_count(&self) -> Option<usize> {
        delegate!(self, e => e.state_count())
    }
}
