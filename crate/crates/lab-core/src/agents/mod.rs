//! Actor-critic training with interchangeable reward sources: the
//! observed (corrupted) sampled reward, or a learned reward regressor
//! mixed in over a linear warm-up.

mod gae;
mod losses;
mod policy;

pub use gae::{
    effective_reward, gae_advantages, AdvantageConfig, RewardMix, RolloutBatch, RolloutLane,
    WarmupSchedule,
};
pub use losses::{a2c_actor_loss, clipped_surrogate_loss, critic_loss};
pub use policy::{Policy, PolicyGrad, PolicyHead};

use crate::env::{Action, ActionSpace, Environment, Preset};
use crate::error::LabError;
use crate::nn::{
    features_for, feature_dim, reward_regression_loss, Adam, FeatureMode, InitScheme, Mlp,
};
use crate::noise::{NoiseModel, NoisyEnv};
use crate::rng;
use crate::Result;
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;

/// Policy-update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    A2c,
    ClippedPg,
}

impl Algo {
    pub fn parse(s: &str) -> Result<Algo> {
        match s {
            "a2c" => Ok(Algo::A2c),
            "clipped" => Ok(Algo::ClippedPg),
            other => Err(LabError::Config(format!(
                "unknown algo `{other}` (expected a2c|clipped)"
            ))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Algo::A2c => "a2c",
            Algo::ClippedPg => "clipped",
        }
    }
}

/// Reward source for the critic targets and advantages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardSourceCfg {
    Sampled,
    Estimated(FeatureMode),
}

impl RewardSourceCfg {
    /// Parse `sampled` or `estimated:<s|sa|sas>`.
    pub fn parse(s: &str) -> Result<RewardSourceCfg> {
        if s == "sampled" {
            return Ok(RewardSourceCfg::Sampled);
        }
        if let Some(mode) = s.strip_prefix("estimated:") {
            return Ok(RewardSourceCfg::Estimated(FeatureMode::parse(mode)?));
        }
        Err(LabError::Config(format!(
            "unknown reward source `{s}` (expected sampled|estimated:<s|sa|sas>)"
        )))
    }

    pub fn id(&self) -> String {
        match self {
            RewardSourceCfg::Sampled => "sampled".to_string(),
            RewardSourceCfg::Estimated(mode) => format!("estimated:{}", mode.id()),
        }
    }
}

/// Full training configuration for one run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub preset: Preset,
    pub noise: Option<NoiseModel>,
    pub algo: Algo,
    pub source: RewardSourceCfg,
    pub updates: usize,
    pub rollout_len: usize,
    pub n_envs: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub clip_epsilon: f64,
    pub entropy_coef: f64,
    pub lr_policy: f64,
    pub lr_critic: f64,
    pub lr_reward: f64,
    /// Warm-up length as a fraction of total updates.
    pub warmup_frac: f64,
    pub ppo_epochs: usize,
    /// Full-batch regression steps for the reward net each update.
    pub reward_steps: usize,
    pub hidden: usize,
    pub trailing_window: usize,
}

impl TrainConfig {
    /// Desk-scale defaults per environment and algorithm. Discrete runs
    /// use A2C settings; the continuous point-mass uses the clipped
    /// objective with a lower reward-regressor learning rate tuned for
    /// each track.
    pub fn defaults(preset: Preset, algo: Algo, source: RewardSourceCfg) -> Result<TrainConfig> {
        let (lr_policy, lr_reward, entropy_coef) = match preset {
            Preset::Grid5 => (7e-4, 1e-3, 0.01),
            Preset::PointMass => (3e-4, 1e-3, 0.0),
            _ => {
                return Err(LabError::Config(format!(
                    "preset {} is not trainable (chains have a single policy)",
                    preset.id()
                )))
            }
        };
        // gridworld runs on small batches so that per-step reward noise
        // actually reaches the updates; the point-mass surrogate objective
        // wants the larger batch
        let (rollout_len, n_envs) = match preset {
            Preset::Grid5 => (16, 4),
            _ => (32, 8),
        };
        Ok(TrainConfig {
            preset,
            noise: None,
            algo,
            source,
            updates: match preset {
                Preset::Grid5 => 300,
                _ => 250,
            },
            rollout_len,
            n_envs,
            gamma: 0.99,
            lambda: match algo {
                Algo::A2c => 1.0,
                Algo::ClippedPg => 0.95,
            },
            clip_epsilon: 0.2,
            entropy_coef,
            lr_policy,
            lr_critic: lr_policy,
            lr_reward,
            warmup_frac: 0.2,
            ppo_epochs: match algo {
                Algo::A2c => 1,
                Algo::ClippedPg => 4,
            },
            reward_steps: 8,
            hidden: 64,
            trailing_window: 100,
        })
    }
}

/// One per-update checkpoint row.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    pub update: usize,
    /// Mean true-reward episode return over the trailing window; NaN
    /// before the first episode completes.
    pub mean_return: f64,
    pub episodes_in_window: usize,
    /// Set when fewer than the full window of episodes were available.
    pub window_short: bool,
    pub mean_abs_adv: f64,
    pub mean_sq_adv: f64,
    pub reward_loss: Option<f64>,
    pub warmup_weight: f64,
    pub diverged: bool,
}

/// Final state of a training run.
pub struct TrainOutcome {
    pub records: Vec<UpdateRecord>,
    pub diverged: bool,
    pub policy: Policy,
    pub critic: Mlp,
    pub reward_net: Option<Mlp>,
}

/// Uniform random action in the environment's action space.
pub fn random_action(space: ActionSpace, rng: &mut ChaCha8Rng) -> Action {
    use rand::Rng;
    match space {
        ActionSpace::Discrete(n) => Action::Discrete(rng.random_range(0..n)),
        ActionSpace::Continuous { dim, low, high } => {
            Action::Continuous((0..dim).map(|_| rng.random_range(low..high)).collect())
        }
    }
}

const PARAM_BOUND: f64 = 1e12;
const LOG_STD_BOUND: f64 = 30.0;

fn params_healthy(policy: &Policy, critic: &Mlp, reward_net: Option<&Mlp>) -> bool {
    let ok = |p: &f64| p.is_finite() && p.abs() <= PARAM_BOUND;
    policy.net.params.iter().all(ok)
        && policy
            .log_std
            .iter()
            .all(|p| p.is_finite() && p.abs() <= LOG_STD_BOUND)
        && critic.params.iter().all(ok)
        && reward_net.map_or(true, |n| n.params.iter().all(ok))
}

/// Train one agent. `cell_index` feeds the seed-derivation scheme so that
/// suite cells at the same seed but different noise levels get distinct
/// streams while reward sources stay stream-paired.
pub fn train_agent(cfg: &TrainConfig, seed: u64, cell_index: u64) -> Result<TrainOutcome> {
    let base = rng::cell_base(seed, cell_index);
    let env_template = cfg.preset.build()?;
    let obs_dim = env_template.observation_dim();
    let space = env_template.action_space();

    let mut param_rng = rng::stream(base, rng::PARAM_STREAM);
    let mut policy = match space {
        ActionSpace::Discrete(n) => Policy::new_discrete(obs_dim, n, cfg.hidden, &mut param_rng),
        ActionSpace::Continuous { dim, .. } => {
            Policy::new_gaussian(obs_dim, dim, cfg.hidden, &mut param_rng)
        }
    };
    let mut critic = Mlp::init(
        &[obs_dim, cfg.hidden, cfg.hidden, 1],
        InitScheme::default(),
        &mut rng::substream(base, rng::PARAM_STREAM, 1),
    );
    let feature_mode = match cfg.source {
        RewardSourceCfg::Sampled => None,
        RewardSourceCfg::Estimated(mode) => Some(mode),
    };
    let mut reward_net = feature_mode.map(|mode| {
        Mlp::init(
            &[feature_dim(mode, space, obs_dim), cfg.hidden, cfg.hidden, 1],
            InitScheme::default(),
            &mut rng::substream(base, rng::PARAM_STREAM, 2),
        )
    });

    let mut policy_adam = Adam::new(policy.param_count());
    let mut critic_adam = Adam::new(critic.param_count());
    let mut reward_adam = reward_net.as_ref().map(|n| Adam::new(n.param_count()));

    let mut envs: Vec<NoisyEnv> = (0..cfg.n_envs)
        .map(|i| {
            NoisyEnv::new(
                env_template.clone(),
                cfg.noise.clone(),
                rng::substream(base, rng::NOISE_STREAM, i as u64),
            )
        })
        .collect();
    let mut env_rngs: Vec<ChaCha8Rng> = (0..cfg.n_envs)
        .map(|i| rng::substream(base, rng::ENV_STREAM, i as u64))
        .collect();
    let mut action_rng = rng::stream(base, rng::ACTION_STREAM);

    for (env, env_rng) in envs.iter_mut().zip(env_rngs.iter_mut()) {
        env.reset(env_rng);
    }
    let mut episode_sums = vec![0.0; cfg.n_envs];
    let mut finished: VecDeque<f64> = VecDeque::with_capacity(cfg.trailing_window + 1);

    let mut schedule = WarmupSchedule::new(match cfg.source {
        RewardSourceCfg::Sampled => 0,
        RewardSourceCfg::Estimated(_) => {
            (cfg.updates as f64 * cfg.warmup_frac).round() as usize
        }
    });
    let adv_cfg = AdvantageConfig::new(cfg.gamma, cfg.lambda, cfg.clip_epsilon);

    let mut records = Vec::with_capacity(cfg.updates);
    let mut diverged = false;

    for update in 0..cfg.updates {
        if !params_healthy(&policy, &critic, reward_net.as_ref()) {
            diverged = true;
        }
        if diverged {
            records.push(UpdateRecord {
                update,
                mean_return: f64::NAN,
                episodes_in_window: 0,
                window_short: true,
                mean_abs_adv: f64::NAN,
                mean_sq_adv: f64::NAN,
                reward_loss: None,
                warmup_weight: schedule.weight(),
                diverged: true,
            });
            break;
        }

        // collect one rollout across all environment copies
        let mut batch = RolloutBatch::default();
        for lane_idx in 0..cfg.n_envs {
            let env = &mut envs[lane_idx];
            let env_rng = &mut env_rngs[lane_idx];
            let mut lane = RolloutLane::default();
            for _ in 0..cfg.rollout_len {
                let state = env.current_state();
                let value = critic.forward(&state.features)[0];
                let (action, logp) = policy.sample(&state.features, &mut action_rng);
                let t = env.step(&action, env_rng);
                episode_sums[lane_idx] += t.reward_true;
                let terminal = t.terminal;
                lane.values.push(value);
                lane.log_probs.push(logp);
                lane.steps.push(t);
                if terminal {
                    finished.push_back(episode_sums[lane_idx]);
                    if finished.len() > cfg.trailing_window {
                        finished.pop_front();
                    }
                    episode_sums[lane_idx] = 0.0;
                    env.reset(env_rng);
                }
            }
            lane.bootstrap = if lane.steps.last().unwrap().terminal {
                0.0
            } else {
                critic.forward(&env.current_state().features)[0]
            };
            lane.rhat = vec![0.0; lane.len()];
            batch.lanes.push(lane);
        }

        // regression steps for the reward estimator, then predict
        let mut reward_loss = None;
        if let (Some(net), Some(adam), Some(mode)) =
            (reward_net.as_mut(), reward_adam.as_mut(), feature_mode)
        {
            let flat_steps: Vec<crate::env::TransitionTuple> = batch
                .lanes
                .iter()
                .flat_map(|l| l.steps.iter().cloned())
                .collect();
            // fast fitting during warm-up, then a gentler tracking rate
            // so the estimator stops chasing per-batch sampling noise
            let lr = if schedule.weight() < 1.0 {
                cfg.lr_reward
            } else {
                cfg.lr_reward * 0.1
            };
            for _ in 0..cfg.reward_steps.max(1) {
                let (loss, grad) = reward_regression_loss(net, mode, space, &flat_steps);
                reward_loss = Some(loss);
                if adam.step(&mut net.params, &grad, lr).is_err() {
                    diverged = true;
                    break;
                }
            }
            for lane in batch.lanes.iter_mut() {
                for (i, step) in lane.steps.iter().enumerate() {
                    lane.rhat[i] = net.forward(&features_for(mode, space, step))[0];
                }
            }
        }

        let mix = match cfg.source {
            RewardSourceCfg::Sampled => RewardMix::Sampled,
            RewardSourceCfg::Estimated(_) => RewardMix::Estimated { schedule },
        };
        let (advantages, targets) = gae_advantages(&batch, &adv_cfg, mix);
        let n = advantages.len() as f64;
        let mean_abs_adv = advantages.iter().map(|a| a.abs()).sum::<f64>() / n;
        let mean_sq_adv = advantages.iter().map(|a| a * a).sum::<f64>() / n;

        let observations: Vec<Vec<f64>> = batch
            .lanes
            .iter()
            .flat_map(|l| l.steps.iter().map(|t| t.state.features.clone()))
            .collect();
        let actions: Vec<Action> = batch
            .lanes
            .iter()
            .flat_map(|l| l.steps.iter().map(|t| t.action.clone()))
            .collect();
        let old_log_probs: Vec<f64> = batch
            .lanes
            .iter()
            .flat_map(|l| l.log_probs.iter().copied())
            .collect();

        match cfg.algo {
            Algo::A2c => {
                let (_, pgrad) = a2c_actor_loss(
                    &policy,
                    &observations,
                    &actions,
                    &advantages,
                    cfg.entropy_coef,
                );
                let mut flat = policy.params_flat();
                if policy_adam
                    .step(&mut flat, &pgrad.flat(), cfg.lr_policy)
                    .is_err()
                {
                    diverged = true;
                } else {
                    policy.set_params_flat(&flat);
                }
                let (_, cgrad) = critic_loss(&critic, &observations, &targets);
                if critic_adam
                    .step(&mut critic.params, &cgrad, cfg.lr_critic)
                    .is_err()
                {
                    diverged = true;
                }
            }
            Algo::ClippedPg => {
                // normalized advantages for the surrogate objective
                let mean = advantages.iter().sum::<f64>() / n;
                let std =
                    (advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
                let normalized: Vec<f64> = if std > 1e-8 {
                    advantages.iter().map(|a| (a - mean) / std).collect()
                } else {
                    vec![0.0; advantages.len()]
                };
                for _ in 0..cfg.ppo_epochs {
                    if diverged || !params_healthy(&policy, &critic, reward_net.as_ref()) {
                        diverged = true;
                        break;
                    }
                    let (_, pgrad) = clipped_surrogate_loss(
                        &policy,
                        &observations,
                        &actions,
                        &old_log_probs,
                        &normalized,
                        cfg.clip_epsilon,
                        cfg.entropy_coef,
                    );
                    let mut flat = policy.params_flat();
                    if policy_adam
                        .step(&mut flat, &pgrad.flat(), cfg.lr_policy)
                        .is_err()
                    {
                        diverged = true;
                        break;
                    }
                    policy.set_params_flat(&flat);
                    let (_, cgrad) = critic_loss(&critic, &observations, &targets);
                    if critic_adam
                        .step(&mut critic.params, &cgrad, cfg.lr_critic)
                        .is_err()
                    {
                        diverged = true;
                        break;
                    }
                }
            }
        }

        let mean_return = if finished.is_empty() {
            f64::NAN
        } else {
            finished.iter().sum::<f64>() / finished.len() as f64
        };
        records.push(UpdateRecord {
            update,
            mean_return,
            episodes_in_window: finished.len(),
            window_short: finished.len() < cfg.trailing_window,
            mean_abs_adv,
            mean_sq_adv,
            reward_loss,
            warmup_weight: schedule.weight(),
            diverged,
        });
        schedule.advance();
    }

    Ok(TrainOutcome {
        records,
        diverged,
        policy,
        critic,
        reward_net,
    })
}
