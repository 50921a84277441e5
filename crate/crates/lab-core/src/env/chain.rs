//! Left-to-right chain MDPs with Bernoulli rewards.

use super::{Action, ActionSpace, Environment, StateRepr, TransitionTuple};
use crate::error::LabError;
use crate::Result;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A chain of `num_reward_steps` reward-bearing transitions followed by a
/// terminal state. Transitions are deterministic left to right; each step
/// pays `reward_value` with probability `reward_prob`, else 0. The only
/// policy is "move right".
#[derive(Debug, Clone, PartialEq)]
pub struct ChainMdp {
    pub num_reward_steps: usize,
    pub reward_value: f64,
    pub reward_prob: f64,
    pub gamma: f64,
}

impl ChainMdp {
    pub fn new(
        num_reward_steps: usize,
        reward_value: f64,
        reward_prob: f64,
        gamma: f64,
    ) -> Result<ChainMdp> {
        if num_reward_steps == 0 {
            return Err(LabError::InvalidParam(
                "num_reward_steps must be >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&reward_prob) {
            return Err(LabError::InvalidParam(format!(
                "reward_prob {reward_prob} outside [0, 1]"
            )));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(LabError::InvalidParam(format!(
                "gamma {gamma} outside (0, 1]"
            )));
        }
        if !reward_value.is_finite() {
            return Err(LabError::InvalidParam("reward_value must be finite".into()));
        }
        Ok(ChainMdp {
            num_reward_steps,
            reward_value,
            reward_prob,
            gamma,
        })
    }

    /// Number of states including the terminal one.
    pub fn num_states(&self) -> usize {
        self.num_reward_steps + 1
    }

    /// Exact state values under the single policy:
    /// `V(s_i) = sum_{k=0}^{remaining-1} gamma^k * p * v`, terminal 0.
    pub fn true_values(&self) -> Vec<f64> {
        let per_step = self.reward_prob * self.reward_value;
        let n = self.num_states();
        let mut values = vec![0.0; n];
        // fill backwards so each state is one discounted step ahead
        for i in (0..self.num_reward_steps).rev() {
            values[i] = per_step + self.gamma * values[i + 1];
        }
        values
    }
}

/// Runtime episode state for a [`ChainMdp`].
#[derive(Debug, Clone)]
pub struct ChainEnv {
    mdp: ChainMdp,
    pos: usize,
}

impl ChainEnv {
    pub fn new(mdp: ChainMdp) -> ChainEnv {
        ChainEnv { mdp, pos: 0 }
    }

    pub fn mdp(&self) -> &ChainMdp {
        &self.mdp
    }

    fn one_hot(&self, index: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.mdp.num_states()];
        v[index] = 1.0;
        v
    }
}

impl Environment for ChainEnv {
    fn reset(&mut self, _rng: &mut ChaCha8Rng) -> StateRepr {
        self.pos = 0;
        self.current_state()
    }

    fn step(&mut self, _action: &Action, rng: &mut ChaCha8Rng) -> TransitionTuple {
        assert!(
            !self.is_terminal(),
            "step() called on a terminal chain environment"
        );
        let from = self.pos;
        let reward = if rng.random::<f64>() < self.mdp.reward_prob {
            self.mdp.reward_value
        } else {
            0.0
        };
        self.pos += 1;
        TransitionTuple {
            state: StateRepr::tabular(from, self.one_hot(from)),
            action: Action::Discrete(0),
            next_state: self.current_state(),
            reward_true: reward,
            reward_observed: reward,
            terminal: self.is_terminal(),
        }
    }

    fn current_state(&self) -> StateRepr {
        StateRepr::tabular(self.pos, self.one_hot(self.pos))
    }

    fn is_terminal(&self) -> bool {
        self.pos >= self.mdp.num_reward_steps
    }

    fn observation_dim(&self) -> usize {
        self.mdp.num_states()
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(1)
    }

    fn state_count(&self) -> Option<usize> {
        Some(self.mdp.num_states())
    }
}
