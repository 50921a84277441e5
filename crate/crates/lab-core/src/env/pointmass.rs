//! Continuous point-mass task whose reward penalizes the action itself.

use super::{Action, ActionSpace, Environment, StateRepr, TransitionTuple};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One-dimensional point mass. The action (clamped to [-1, 1]) moves the
/// position by `0.1 * a`; the reward is `-x^2 - action_cost_coeff * a^2`,
/// so the true reward is a function of (state, action) and never of the
/// state alone. Observation is `[position, velocity]` where velocity is
/// the displacement realized on the previous step.
#[derive(Debug, Clone)]
pub struct PointMass {
    pub action_cost_coeff: f64,
    pub horizon: usize,
    position: f64,
    velocity: f64,
    steps: usize,
}

impl PointMass {
    pub fn new(action_cost_coeff: f64, horizon: usize) -> Self {
        assert!(action_cost_coeff >= 0.0 && horizon > 0);
        PointMass {
            action_cost_coeff,
            horizon,
            position: 0.0,
            velocity: 0.0,
            steps: 0,
        }
    }

    /// Test hook: place the mass at a known position.
    pub fn set_position(&mut self, x: f64) {
        self.position = x;
    }
}

impl Environment for PointMass {
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> StateRepr {
        self.position = rng.random_range(-1.0..1.0);
        self.velocity = 0.0;
        self.steps = 0;
        self.current_state()
    }

    fn step(&mut self, action: &Action, _rng: &mut ChaCha8Rng) -> TransitionTuple {
        assert!(!self.is_terminal(), "step() called past the horizon");
        let raw = match action {
            Action::Continuous(v) => v[0],
            Action::Discrete(_) => panic!("point-mass takes continuous actions"),
        };
        let a = raw.clamp(-1.0, 1.0);
        let from = self.current_state();
        let reward = -self.position * self.position - self.action_cost_coeff * a * a;
        self.velocity = 0.1 * a;
        self.position += self.velocity;
        self.steps += 1;
        TransitionTuple {
            state: from,
            action: action.clone(),
            next_state: self.current_state(),
            reward_true: reward,
            reward_observed: reward,
            terminal: self.is_terminal(),
        }
    }

    fn current_state(&self) -> StateRepr {
        StateRepr::continuous(vec![self.position, self.velocity])
    }

    fn is_terminal(&self) -> bool {
        self.steps >= self.horizon
    }

    fn observation_dim(&self) -> usize {
        2
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous {
            dim: 1,
            low: -1.0,
            high: 1.0,
        }
    }
}
