//! Tabular TD(0) value learning on chain MDPs, with either the sampled
//! reward or a sample-mean reward estimator in the bootstrap target.

use crate::env::{Action, EnvKind, Preset, TransitionTuple};
use crate::error::LabError;
use crate::noise::{NoiseModel, NoisyEnv};
use crate::rng;
use crate::Result;
use rayon::prelude::*;
use std::collections::HashMap;

/// Which key the sample-mean estimator conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyMode {
    S,
    SA,
    SAS,
}

type Key = (usize, usize, usize);

/// Running sample mean of observed rewards per key.
#[derive(Debug, Clone, Default)]
pub struct SampleMeanEstimator {
    mode: KeyMode,
    table: HashMap<Key, (u64, f64)>,
}

impl Default for KeyMode {
    fn default() -> Self {
        KeyMode::S
    }
}

impl SampleMeanEstimator {
    pub fn new(mode: KeyMode) -> Self {
        SampleMeanEstimator {
            mode,
            table: HashMap::new(),
        }
    }

    pub fn key_for(&self, t: &TransitionTuple) -> Key {
        let s = t.state.index.expect("tabular estimator needs state indices");
        let a = match &t.action {
            Action::Discrete(a) => *a,
            Action::Continuous(_) => panic!("tabular estimator needs discrete actions"),
        };
        let sp = t
            .next_state
            .index
            .expect("tabular estimator needs state indices");
        match self.mode {
            KeyMode::S => (s, 0, 0),
            KeyMode::SA => (s, a, 0),
            KeyMode::SAS => (s, a, sp),
        }
    }

    /// Fold one observed reward into the running mean for `key`.
    pub fn observe(&mut self, key: Key, reward_observed: f64) {
        let entry = self.table.entry(key).or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 += (reward_observed - entry.1) / entry.0 as f64;
    }

    pub fn mean(&self, key: Key) -> Option<f64> {
        self.table.get(&key).map(|(_, m)| *m)
    }

    pub fn count(&self, key: Key) -> u64 {
        self.table.get(&key).map(|(c, _)| *c).unwrap_or(0)
    }

    pub fn is_fitted(&self) -> bool {
        !self.table.is_empty()
    }
}

/// Reward fed into the TD target.
#[derive(Clone, Copy)]
pub enum RewardSource<'a> {
    Sampled,
    Estimator(&'a SampleMeanEstimator),
}

/// Per-state value estimates with a fixed discount. The last state index
/// is the terminal state and stays at 0 forever.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    values: Vec<f64>,
    pub gamma: f64,
}

impl ValueTable {
    pub fn zeros(num_states: usize, gamma: f64) -> ValueTable {
        ValueTable {
            values: vec![0.0; num_states],
            gamma,
        }
    }

    pub fn value(&self, state: usize) -> f64 {
        self.values[state]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Bellman target for one transition. Returns the target and whether the
/// estimator fell back to the sampled reward because its key was unseen.
pub fn td_target(v: &ValueTable, t: &TransitionTuple, source: RewardSource) -> (f64, bool) {
    let next = t.next_state.index.expect("tabular target needs indices");
    let bootstrap = if t.terminal {
        0.0
    } else {
        v.gamma * v.value(next)
    };
    match source {
        RewardSource::Sampled => (t.reward_observed + bootstrap, false),
        RewardSource::Estimator(est) => match est.mean(est.key_for(t)) {
            Some(mean) => (mean + bootstrap, false),
            None => (t.reward_observed + bootstrap, true),
        },
    }
}

/// TD(0) update `V(s) += alpha * (target - V(s))`. Only `V(s)` changes.
/// Returns whether the estimator fallback fired.
pub fn td_update(
    v: &mut ValueTable,
    t: &TransitionTuple,
    alpha: f64,
    source: RewardSource,
) -> Result<bool> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(LabError::InvalidParam(format!(
            "alpha {alpha} outside (0, 1]"
        )));
    }
    let (target, fallback) = td_target(v, t, source);
    let s = t.state.index.expect("tabular update needs indices");
    v.values[s] += alpha * (target - v.values[s]);
    Ok(fallback)
}

/// RMSE of the table against the true values over non-terminal states.
/// Both vectors cover all states; the final index is the terminal state.
pub fn rmse(v: &ValueTable, truth: &[f64]) -> Result<f64> {
    if truth.len() != v.len() {
        return Err(LabError::DimensionMismatch {
            expected: v.len(),
            got: truth.len(),
            context: "rmse truth vector".into(),
        });
    }
    let n = v.len() - 1;
    let sum: f64 = (0..n).map(|s| (v.value(s) - truth[s]).powi(2)).sum();
    Ok((sum / n as f64).sqrt())
}

/// Default learning-rate grid for the RMSE sweep.
pub const DEFAULT_ALPHAS: [f64; 7] = [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0];

/// One result row of the tabular sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularCell {
    pub preset: &'static str,
    pub reward_value: f64,
    pub prob: f64,
    pub alpha: f64,
    pub source: &'static str,
    pub seed: u64,
    pub mean_rmse: f64,
    pub fallback_events: u64,
}

/// Run the RMSE-vs-learning-rate protocol: TD learning for `episodes`
/// episodes per cell, RMSE against the exact values measured at every
/// episode end and averaged. Each (alpha, seed) cell runs both reward
/// sources against identical environment and noise streams.
pub fn run_tabular_experiment(
    preset: Preset,
    reward_value: f64,
    prob: f64,
    noise: Option<NoiseModel>,
    alphas: &[f64],
    episodes: usize,
    seeds: &[u64],
) -> Result<Vec<TabularCell>> {
    if alphas.is_empty() || seeds.is_empty() || episodes == 0 {
        return Err(LabError::Config(
            "tabular sweep needs alphas, seeds and episodes".into(),
        ));
    }
    for &a in alphas {
        if !(a > 0.0 && a <= 1.0) {
            return Err(LabError::InvalidParam(format!("alpha {a} outside (0, 1]")));
        }
    }
    let chain = preset.build_chain_env(reward_value, prob)?;
    let truth = chain.mdp().true_values();

    let mut jobs = Vec::new();
    for (ai, &alpha) in alphas.iter().enumerate() {
        for &seed in seeds {
            jobs.push((ai, alpha, seed));
        }
    }
    let cells: Result<Vec<Vec<TabularCell>>> = jobs
        .par_iter()
        .map(|&(ai, alpha, seed)| {
            let mut pair = Vec::with_capacity(2);
            for source_name in ["sampled", "estimator"] {
                let (mean_rmse, fallbacks) = run_single_cell(
                    &chain,
                    &truth,
                    noise.clone(),
                    alpha,
                    episodes,
                    seed,
                    ai as u64,
                    source_name == "estimator",
                )?;
                pair.push(TabularCell {
                    preset: preset.id(),
                    reward_value,
                    prob,
                    alpha,
                    source: source_name,
                    seed,
                    mean_rmse,
                    fallback_events: fallbacks,
                });
            }
            Ok(pair)
        })
        .collect();
    Ok(cells?.into_iter().flatten().collect())
}

#[allow(clippy::too_many_arguments)]
fn run_single_cell(
    chain: &crate::env::ChainEnv,
    truth: &[f64],
    noise: Option<NoiseModel>,
    alpha: f64,
    episodes: usize,
    seed: u64,
    cell_index: u64,
    use_estimator: bool,
) -> Result<(f64, u64)> {
    let base = rng::cell_base(seed, cell_index);
    let mut env_rng = rng::stream(base, rng::ENV_STREAM);
    let noise_rng = rng::stream(base, rng::NOISE_STREAM);
    let mut env = NoisyEnv::new(EnvKind::Chain(chain.clone()), noise, noise_rng);

    let mdp = chain.mdp();
    let mut table = ValueTable::zeros(mdp.num_states(), mdp.gamma);
    let mut est = SampleMeanEstimator::new(KeyMode::S);
    let mut fallbacks = 0u64;
    let mut rmse_sum = 0.0;
    for _ in 0..episodes {
        env.reset(&mut env_rng);
        while !env.is_terminal() {
            let t = env.step(&Action::Discrete(0), &mut env_rng);
            let fb = if use_estimator {
                let fb = td_update(&mut table, &t, alpha, RewardSource::Estimator(&est))?;
                est.observe(est.key_for(&t), t.reward_observed);
                fb
            } else {
                td_update(&mut table, &t, alpha, RewardSource::Sampled)?
            };
            if fb {
                fallbacks += 1;
            }
        }
        rmse_sum += rmse(&table, truth)?;
    }
    Ok((rmse_sum / episodes as f64, fallbacks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ChainMdp, Environment, StateRepr};

    fn tuple(s: usize, sp: usize, r: f64, terminal: bool) -> TransitionTuple {
        TransitionTuple {
            state: StateRepr::tabular(s, vec![]),
            action: Action::Discrete(0),
            next_state: StateRepr::tabular(sp, vec![]),
            reward_true: r,
            reward_observed: r,
            terminal,
        }
    }

    #[test]
    fn observe_single_sample() {
        let mut est = SampleMeanEstimator::new(KeyMode::S);
        est.observe((0, 0, 0), 5.0);
        assert_eq!(est.mean((0, 0, 0)), Some(5.0));
        assert_eq!(est.count((0, 0, 0)), 1);
    }

    #[test]
    fn observe_alternating_sequence() {
        let mut est = SampleMeanEstimator::new(KeyMode::S);
        for r in [1.0, 0.0, 1.0, 0.0] {
            est.observe((2, 0, 0), r);
        }
        assert!((est.mean((2, 0, 0)).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(est.count((2, 0, 0)), 4);
    }

    #[test]
    fn observe_bernoulli_clt_bound() {
        use rand::Rng;
        let mut est = SampleMeanEstimator::new(KeyMode::S);
        let mut r = rng::stream(50, rng::ENV_STREAM);
        for _ in 0..10_000 {
            let x = if r.random::<f64>() < 0.5 { 5.0 } else { 0.0 };
            est.observe((0, 0, 0), x);
        }
        assert!((est.mean((0, 0, 0)).unwrap() - 2.5).abs() <= 3.0 * 0.025);
    }

    #[test]
    fn td_target_forms() {
        let mut v = ValueTable::zeros(3, 1.0);
        v.values[1] = 0.5;
        let t = tuple(0, 1, 1.0, false);
        assert_eq!(td_target(&v, &t, RewardSource::Sampled).0, 1.5);

        let mut est = SampleMeanEstimator::new(KeyMode::S);
        est.observe((0, 0, 0), 0.5);
        let (target, fb) = td_target(&v, &t, RewardSource::Estimator(&est));
        assert_eq!(target, 1.0);
        assert!(!fb);
    }

    #[test]
    fn td_target_terminal_bootstrap_is_zero() {
        let mut v = ValueTable::zeros(3, 0.9);
        v.values[2] = 4.0; // should be ignored
        let t = tuple(1, 2, 1.0, true);
        assert_eq!(td_target(&v, &t, RewardSource::Sampled).0, 1.0);
    }

    #[test]
    fn td_target_unseen_key_falls_back() {
        let v = ValueTable::zeros(3, 1.0);
        let est = SampleMeanEstimator::new(KeyMode::S);
        let t = tuple(0, 1, 0.75, false);
        let (target, fb) = td_target(&v, &t, RewardSource::Estimator(&est));
        assert_eq!(target, 0.75);
        assert!(fb);
    }

    #[test]
    fn td_update_examples() {
        let mut v = ValueTable::zeros(2, 1.0);
        let t = tuple(0, 1, 1.5, true);
        td_update(&mut v, &t, 1.0, RewardSource::Sampled).unwrap();
        assert_eq!(v.value(0), 1.5);

        // fixed point: target == value leaves it unchanged
        let mut v = ValueTable::zeros(2, 1.0);
        v.values[0] = 1.0;
        let t = tuple(0, 1, 1.0, true);
        td_update(&mut v, &t, 0.3, RewardSource::Sampled).unwrap();
        assert_eq!(v.value(0), 1.0);

        // two half steps toward a constant target of 1
        let mut v = ValueTable::zeros(2, 1.0);
        let t = tuple(0, 1, 1.0, true);
        td_update(&mut v, &t, 0.5, RewardSource::Sampled).unwrap();
        td_update(&mut v, &t, 0.5, RewardSource::Sampled).unwrap();
        assert!((v.value(0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn td_update_rejects_bad_alpha() {
        let mut v = ValueTable::zeros(2, 1.0);
        let t = tuple(0, 1, 1.0, true);
        assert!(td_update(&mut v, &t, 0.0, RewardSource::Sampled).is_err());
        assert!(td_update(&mut v, &t, 1.5, RewardSource::Sampled).is_err());
    }

    #[test]
    fn rmse_examples() {
        let mdp = ChainMdp::new(3, 1.0, 0.5, 1.0).unwrap();
        let truth = mdp.true_values();
        let mut v = ValueTable::zeros(4, 1.0);
        v.values = truth.clone();
        assert_eq!(rmse(&v, &truth).unwrap(), 0.0);

        let v = ValueTable::zeros(3, 1.0);
        assert_eq!(rmse(&v, &[1.0, 1.0, 0.0]).unwrap(), 1.0);

        let v = ValueTable::zeros(3, 1.0);
        assert!(rmse(&v, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn near_zero_alpha_keeps_table_at_init() {
        let cells = run_tabular_experiment(
            Preset::Chain5,
            1.0,
            0.5,
            None,
            &[1e-6],
            100,
            &[0, 1, 2],
        )
        .unwrap();
        let mdp = ChainMdp::new(5, 1.0, 0.5, 1.0).unwrap();
        let zero_table = ValueTable::zeros(6, 1.0);
        let base = rmse(&zero_table, &mdp.true_values()).unwrap();
        for c in &cells {
            assert!(
                (c.mean_rmse - base).abs() < 1e-3,
                "{}: {} vs {base}",
                c.source,
                c.mean_rmse
            );
        }
    }

    #[test]
    fn deterministic_chain_reaches_zero_rmse() {
        // p=1, alpha=1: values back-propagate one state per episode, so
        // RMSE hits exactly 0 from episode `num_reward_steps` onward.
        let cells =
            run_tabular_experiment(Preset::Chain5, 1.0, 1.0, None, &[1.0], 100, &[7]).unwrap();
        // mean over 100 episodes of a sequence that is 0 from episode 5 on:
        // the first episodes contribute a fixed, source-independent amount.
        assert_eq!(cells.len(), 2);
        assert!((cells[0].mean_rmse - cells[1].mean_rmse).abs() < 1e-12);
        // re-run just the tail: after 5 episodes the table is exact
        let mdp = ChainMdp::new(5, 1.0, 1.0, 1.0).unwrap();
        let mut table = ValueTable::zeros(6, 1.0);
        let mut env = crate::env::ChainEnv::new(mdp.clone());
        let mut r = rng::stream(7, rng::ENV_STREAM);
        for _ in 0..5 {
            env.reset(&mut r);
            while !env.is_terminal() {
                let t = env.step(&Action::Discrete(0), &mut r);
                td_update(&mut table, &t, 1.0, RewardSource::Sampled).unwrap();
            }
        }
        assert_eq!(rmse(&table, &mdp.true_values()).unwrap(), 0.0);
    }

    #[test]
    fn estimator_beats_sampled_at_high_learning_rate() {
        let seeds: Vec<u64> = (0..10).collect();
        let cells = run_tabular_experiment(
            Preset::Chain5,
            5.0,
            0.5,
            None,
            &[1.0],
            100,
            &seeds,
        )
        .unwrap();
        let mut wins = 0;
        for seed in &seeds {
            let s = cells
                .iter()
                .find(|c| c.seed == *seed && c.source == "sampled")
                .unwrap();
            let e = cells
                .iter()
                .find(|c| c.seed == *seed && c.source == "estimator")
                .unwrap();
            if e.mean_rmse < s.mean_rmse {
                wins += 1;
            }
        }
        assert!(wins >= 9, "estimator won only {wins}/10 seeds");
    }

    #[test]
    fn converged_estimator_fixed_point_matches_truth() {
        use rand::Rng;
        let mdp = ChainMdp::new(5, 1.0, 0.5, 1.0).unwrap();
        let mut est = SampleMeanEstimator::new(KeyMode::S);
        let mut r = rng::stream(60, rng::ENV_STREAM);
        // converge the estimator well past the count floor
        for _ in 0..200_000 {
            for s in 0..5 {
                let x = if r.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
                est.observe((s, 0, 0), x);
            }
        }
        for s in 0..5 {
            assert!(est.count((s, 0, 0)) >= 1_000);
        }
        let truth = mdp.true_values();
        for alpha in [0.05, 0.5, 1.0] {
            let mut table = ValueTable::zeros(6, 1.0);
            let mut env = crate::env::ChainEnv::new(mdp.clone());
            let mut er = rng::stream(61, rng::ENV_STREAM);
            for _ in 0..2_000 {
                env.reset(&mut er);
                while !env.is_terminal() {
                    let t = env.step(&Action::Discrete(0), &mut er);
                    td_update(&mut table, &t, alpha, RewardSource::Estimator(&est)).unwrap();
                }
            }
            let err = rmse(&table, &truth).unwrap();
            assert!(err < 1e-2, "alpha {alpha}: rmse {err}");
        }
    }

    #[test]
    fn reward_stream_is_identical_across_sources() {
        let mdp = ChainMdp::new(5, 2.0, 0.5, 1.0).unwrap();
        let noise = NoiseModel::gaussian(0.3).unwrap();
        let collect = |use_est: bool| -> Vec<f64> {
            let mut env = NoisyEnv::new(
                EnvKind::Chain(crate::env::ChainEnv::new(mdp.clone())),
                Some(noise.clone()),
                rng::stream(5, rng::NOISE_STREAM),
            );
            let mut env_rng = rng::stream(5, rng::ENV_STREAM);
            let mut table = ValueTable::zeros(6, 1.0);
            let mut est = SampleMeanEstimator::new(KeyMode::S);
            let mut out = Vec::new();
            for _ in 0..20 {
                env.reset(&mut env_rng);
                while !env.is_terminal() {
                    let t = env.step(&Action::Discrete(0), &mut env_rng);
                    out.push(t.reward_observed);
                    if use_est {
                        td_update(&mut table, &t, 0.5, RewardSource::Estimator(&est)).unwrap();
                        est.observe(est.key_for(&t), t.reward_observed);
                    } else {
                        td_update(&mut table, &t, 0.5, RewardSource::Sampled).unwrap();
                    }
                }
            }
            out
        };
        assert_eq!(collect(false), collect(true));
    }

    #[test]
    fn sweep_is_bitwise_reproducible() {
        let run = || {
            run_tabular_experiment(
                Preset::Chain5,
                2.0,
                0.5,
                Some(NoiseModel::uniform_replace(0.2).unwrap()),
                &[0.25, 1.0],
                50,
                &[0, 1, 2],
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn fallback_events_fire_once_per_state() {
        let cells =
            run_tabular_experiment(Preset::Chain5, 1.0, 0.5, None, &[0.5], 100, &[3]).unwrap();
        let est = cells.iter().find(|c| c.source == "estimator").unwrap();
        let samp = cells.iter().find(|c| c.source == "sampled").unwrap();
        assert_eq!(est.fallback_events, 5);
        assert_eq!(samp.fallback_events, 0);
    }
}
