//! Rollout storage, the warm-up mixing schedule, and generalized
//! advantage estimation with interchangeable reward sources.

use crate::env::TransitionTuple;

/// Linear warm-up of the estimator weight: `w(u) = min(1, u / total)`,
/// so update 0 uses the sampled reward only and the estimator takes over
/// once `total_warmup_updates` have passed. `total = 0` means no warm-up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WarmupSchedule {
    pub total_warmup_updates: usize,
    pub current_update: usize,
}

impl WarmupSchedule {
    pub fn new(total_warmup_updates: usize) -> WarmupSchedule {
        WarmupSchedule {
            total_warmup_updates,
            current_update: 0,
        }
    }

    pub fn weight(&self) -> f64 {
        if self.total_warmup_updates == 0 {
            1.0
        } else {
            (self.current_update as f64 / self.total_warmup_updates as f64).min(1.0)
        }
    }

    pub fn advance(&mut self) {
        self.current_update += 1;
    }
}

/// Convex combination of the estimator prediction and the observed
/// (corrupted) sampled reward under the warm-up schedule.
pub fn effective_reward(t: &TransitionTuple, rhat: f64, schedule: &WarmupSchedule) -> f64 {
    assert!(rhat.is_finite(), "estimator prediction must be finite");
    let w = schedule.weight();
    w * rhat + (1.0 - w) * t.reward_observed
}

/// GAE and advantage settings.
#[derive(Debug, Clone, Copy)]
pub struct AdvantageConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_epsilon: f64,
}

impl AdvantageConfig {
    pub fn new(gamma: f64, lambda: f64, clip_epsilon: f64) -> AdvantageConfig {
        assert!(gamma > 0.0 && gamma <= 1.0);
        assert!((0.0..=1.0).contains(&lambda));
        assert!(clip_epsilon > 0.0 && clip_epsilon < 1.0);
        AdvantageConfig {
            gamma,
            lambda,
            clip_epsilon,
        }
    }
}

/// One environment copy's stretch of a rollout.
#[derive(Debug, Clone, Default)]
pub struct RolloutLane {
    pub steps: Vec<TransitionTuple>,
    /// Critic prediction `V(s_t)` per step, from collection time.
    pub values: Vec<f64>,
    /// Estimator prediction per step (zeros when the source is sampled).
    pub rhat: Vec<f64>,
    /// Log-probability of the taken action at collection time.
    pub log_probs: Vec<f64>,
    /// `V` of the state after the last step; 0 if that step was terminal.
    pub bootstrap: f64,
}

impl RolloutLane {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    fn check(&self) {
        assert_eq!(self.steps.len(), self.values.len());
        assert_eq!(self.steps.len(), self.rhat.len());
        assert_eq!(self.steps.len(), self.log_probs.len());
        if let Some(last) = self.steps.last() {
            if last.terminal {
                assert_eq!(self.bootstrap, 0.0, "terminal steps have bootstrap 0");
            }
        }
    }
}

/// A full rollout across parallel environment copies.
#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    pub lanes: Vec<RolloutLane>,
}

impl RolloutBatch {
    pub fn total_steps(&self) -> usize {
        self.lanes.iter().map(RolloutLane::len).sum()
    }
}

/// Which reward feeds the TD errors.
#[derive(Debug, Clone, Copy)]
pub enum RewardMix {
    /// The observed (possibly corrupted) sampled reward.
    Sampled,
    /// Warm-up mix of the estimator prediction and the sampled reward.
    Estimated { schedule: WarmupSchedule },
}

/// Compute GAE advantages `A_t = sum_k (gamma*lambda)^k delta_{t+k}` with
/// episode-boundary resets, and value targets `A_t + V(s_t)`. Results are
/// flattened lane-major, aligned with the lane step order.
pub fn gae_advantages(
    batch: &RolloutBatch,
    cfg: &AdvantageConfig,
    source: RewardMix,
) -> (Vec<f64>, Vec<f64>) {
    let mut advantages = Vec::with_capacity(batch.total_steps());
    let mut targets = Vec::with_capacity(batch.total_steps());
    for lane in &batch.lanes {
        lane.check();
        let n = lane.len();
        let mut lane_adv = vec![0.0; n];
        let mut acc = 0.0;
        for t in (0..n).rev() {
            let step = &lane.steps[t];
            let reward = match source {
                RewardMix::Sampled => step.reward_observed,
                RewardMix::Estimated { schedule } => {
                    effective_reward(step, lane.rhat[t], &schedule)
                }
            };
            let next_value = if step.terminal {
                0.0
            } else if t + 1 < n {
                lane.values[t + 1]
            } else {
                lane.bootstrap
            };
            let delta = reward + cfg.gamma * next_value - lane.values[t];
            acc = if step.terminal {
                delta
            } else {
                delta + cfg.gamma * cfg.lambda * acc
            };
            lane_adv[t] = acc;
        }
        for t in 0..n {
            advantages.push(lane_adv[t]);
            targets.push(lane_adv[t] + lane.values[t]);
        }
    }
    (advantages, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Action, StateRepr};

    fn step(r: f64, terminal: bool) -> TransitionTuple {
        TransitionTuple {
            state: StateRepr::continuous(vec![0.0]),
            action: Action::Discrete(0),
            next_state: StateRepr::continuous(vec![0.0]),
            reward_true: r,
            reward_observed: r,
            terminal,
        }
    }

    fn lane(rewards: &[f64], values: &[f64], bootstrap: f64) -> RolloutLane {
        RolloutLane {
            steps: rewards.iter().map(|&r| step(r, false)).collect(),
            values: values.to_vec(),
            rhat: vec![0.0; rewards.len()],
            log_probs: vec![0.0; rewards.len()],
            bootstrap,
        }
    }

    #[test]
    fn warmup_weight_trajectory() {
        let mut s = WarmupSchedule::new(4);
        let mut weights = Vec::new();
        for _ in 0..6 {
            weights.push(s.weight());
            s.advance();
        }
        assert_eq!(weights, vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.0]);
        assert_eq!(WarmupSchedule::new(0).weight(), 1.0);
    }

    #[test]
    fn effective_reward_endpoints_and_midpoint() {
        let t = step(0.0, false);
        let start = WarmupSchedule {
            total_warmup_updates: 10,
            current_update: 0,
        };
        assert_eq!(effective_reward(&t, 2.0, &start), 0.0);
        let done = WarmupSchedule {
            total_warmup_updates: 10,
            current_update: 15,
        };
        assert_eq!(effective_reward(&t, 2.0, &done), 2.0);
        let half = WarmupSchedule {
            total_warmup_updates: 10,
            current_update: 5,
        };
        assert_eq!(effective_reward(&t, 2.0, &half), 1.0);
    }

    #[test]
    fn lambda_zero_gives_one_step_td_errors() {
        let batch = RolloutBatch {
            lanes: vec![lane(&[1.0, -0.5, 2.0], &[0.3, 0.1, -0.2], 0.4)],
        };
        let cfg = AdvantageConfig::new(0.9, 0.0, 0.2);
        let (adv, targets) = gae_advantages(&batch, &cfg, RewardMix::Sampled);
        let expect = [
            1.0 + 0.9 * 0.1 - 0.3,
            -0.5 + 0.9 * -0.2 - 0.1,
            2.0 + 0.9 * 0.4 + 0.2,
        ];
        for (a, e) in adv.iter().zip(expect.iter()) {
            assert!((a - e).abs() < 1e-15);
        }
        for i in 0..3 {
            assert!((targets[i] - (adv[i] + batch.lanes[0].values[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn all_zero_inputs_give_zero_advantages() {
        let batch = RolloutBatch {
            lanes: vec![lane(&[0.0; 5], &[0.0; 5], 0.0)],
        };
        let cfg = AdvantageConfig::new(0.99, 0.95, 0.2);
        let (adv, targets) = gae_advantages(&batch, &cfg, RewardMix::Sampled);
        assert!(adv.iter().all(|a| *a == 0.0));
        assert!(targets.iter().all(|t| *t == 0.0));
    }

    #[test]
    fn matches_brute_force_double_loop() {
        let rewards = [0.7, -0.3, 1.9];
        let values = [0.5, -0.1, 0.8];
        let bootstrap = 0.25;
        let (gamma, lambda) = (0.9, 0.95);
        let batch = RolloutBatch {
            lanes: vec![lane(&rewards, &values, bootstrap)],
        };
        let cfg = AdvantageConfig::new(gamma, lambda, 0.2);
        let (adv, _) = gae_advantages(&batch, &cfg, RewardMix::Sampled);
        // brute force: A_t = sum_k (gamma*lambda)^k delta_{t+k}
        let mut deltas = Vec::new();
        for t in 0..3 {
            let next = if t + 1 < 3 { values[t + 1] } else { bootstrap };
            deltas.push(rewards[t] + gamma * next - values[t]);
        }
        for t in 0..3 {
            let mut expect = 0.0;
            for k in t..3 {
                expect += (gamma * lambda).powi((k - t) as i32) * deltas[k];
            }
            assert!((adv[t] - expect).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn terminal_resets_the_accumulator_and_bootstrap() {
        let mut l = lane(&[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0], 0.0);
        l.steps[1].terminal = true;
        let batch = RolloutBatch { lanes: vec![l] };
        let cfg = AdvantageConfig::new(1.0, 1.0, 0.2);
        let (adv, _) = gae_advantages(&batch, &cfg, RewardMix::Sampled);
        // third step starts a fresh episode: advantage is its own delta
        assert_eq!(adv[2], 1.0);
        // second step is terminal: no bootstrap through it
        assert_eq!(adv[1], 1.0);
        // first step accumulates only up to the terminal
        assert_eq!(adv[0], 2.0);
    }

    #[test]
    fn estimated_source_with_full_weight_uses_rhat_exactly() {
        let mut l = lane(&[5.0, 5.0], &[0.2, 0.1], 0.3);
        l.rhat = vec![1.5, 2.5];
        let batch = RolloutBatch { lanes: vec![l] };
        let cfg = AdvantageConfig::new(0.9, 0.0, 0.2);
        let schedule = WarmupSchedule {
            total_warmup_updates: 10,
            current_update: 10,
        };
        let (_, targets) = gae_advantages(&batch, &cfg, RewardMix::Estimated { schedule });
        // lambda = 0, w = 1: target is exactly rhat + gamma * V(next)
        assert!((targets[0] - (1.5 + 0.9 * 0.1)).abs() < 1e-15);
        assert!((targets[1] - (2.5 + 0.9 * 0.3)).abs() < 1e-15);
    }
}
