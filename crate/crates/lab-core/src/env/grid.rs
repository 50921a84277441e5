//! Small deterministic gridworld with a single goal reward.

use super::{Action, ActionSpace, Environment, StateRepr, TransitionTuple};
use rand_chacha::ChaCha8Rng;

/// Square gridworld. Four actions (up/down/left/right, clamped at walls),
/// +1 for entering the goal cell, episode capped at `max_steps`. The cap
/// counts as terminal for bootstrapping purposes.
#[derive(Debug, Clone)]
pub struct GridWorld {
    size: usize,
    start: (usize, usize),
    goal: (usize, usize),
    max_steps: usize,
    pos: (usize, usize),
    steps: usize,
    done: bool,
}

impl GridWorld {
    pub fn new(size: usize, start: (usize, usize), goal: (usize, usize), max_steps: usize) -> Self {
        assert!(size > 0 && start.0 < size && start.1 < size && goal.0 < size && goal.1 < size);
        GridWorld {
            size,
            start,
            goal,
            max_steps,
            pos: start,
            steps: 0,
            done: false,
        }
    }

    fn index(&self, pos: (usize, usize)) -> usize {
        pos.0 * self.size + pos.1
    }

    fn repr(&self, pos: (usize, usize)) -> StateRepr {
        let mut features = vec![0.0; self.size * self.size];
        features[self.index(pos)] = 1.0;
        StateRepr::tabular(self.index(pos), features)
    }
}

impl Environment for GridWorld {
    fn reset(&mut self, _rng: &mut ChaCha8Rng) -> StateRepr {
        self.pos = self.start;
        self.steps = 0;
        self.done = false;
        self.current_state()
    }

    fn step(&mut self, action: &Action, _rng: &mut ChaCha8Rng) -> TransitionTuple {
        assert!(!self.done, "step() called on a terminal gridworld");
        let a = match action {
            Action::Discrete(a) => *a,
            Action::Continuous(_) => panic!("gridworld takes discrete actions"),
        };
        assert!(a < 4, "gridworld action out of range");
        let from = self.pos;
        let (r, c) = self.pos;
        self.pos = match a {
            0 => (r.saturating_sub(1), c),
            1 => ((r + 1).min(self.size - 1), c),
            2 => (r, c.saturating_sub(1)),
            _ => (r, (c + 1).min(self.size - 1)),
        };
        self.steps += 1;
        let reached = self.pos == self.goal;
        let reward = if reached { 1.0 } else { 0.0 };
        self.done = reached || self.steps >= self.max_steps;
        TransitionTuple {
            state: self.repr(from),
            action: action.clone(),
            next_state: self.repr(self.pos),
            reward_true: reward,
            reward_observed: reward,
            terminal: self.done,
        }
    }

    fn current_state(&self) -> StateRepr {
        self.repr(self.pos)
    }

    fn is_terminal(&self) -> bool {
        self.done
    }

    fn observation_dim(&self) -> usize {
        self.size * self.size
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(4)
    }

    fn state_count(&self) -> Option<usize> {
        Some(self.size * self.size)
    }
}
