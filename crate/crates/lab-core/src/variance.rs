//! Monte-Carlo verification of the variance identities behind the reward
//! estimator, plus the frozen-policy reward-statistics protocol.
//!
//! The sample-mean model throughout: one measured transition contributes
//! the pair `(r_1, V(s'))`; the estimator averages `N` i.i.d. reward
//! replays of the same transition, of which the measured draw is the
//! first, so only that draw covaries with the measured next value.

use crate::env::{Action, ActionSpace, EnvKind, StateRepr, TransitionTuple};
use crate::error::LabError;
use crate::nn::{features_for, FeatureMode, Mlp};
use crate::noise::NoiseModel;
use crate::tabular::SampleMeanEstimator;
use crate::Result;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Three-term decomposition of the Bellman-target variance, all unbiased
/// (n-1) sample moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceDecomposition {
    pub var_reward: f64,
    pub var_next_value: f64,
    pub cov_reward_value: f64,
    /// Variance measured directly on `r + gamma*V(s')`.
    pub var_target: f64,
}

impl VarianceDecomposition {
    /// The target variance reassembled from the three terms. Agrees with
    /// `var_target` up to accumulation round-off.
    pub fn identity_var(&self) -> f64 {
        self.var_reward + self.var_next_value + 2.0 * self.cov_reward_value
    }
}

/// Decompose the variance of `r + gamma*V(s')` over samples of
/// `(r, gamma*V(s'))` pairs.
pub fn decompose_target_variance(samples: &[(f64, f64)]) -> Result<VarianceDecomposition> {
    let n = samples.len();
    if n < 2 {
        return Err(LabError::InvalidParam(
            "variance decomposition needs at least 2 samples".into(),
        ));
    }
    let nf = n as f64;
    let (mut mr, mut mv) = (0.0, 0.0);
    for &(r, v) in samples {
        mr += r;
        mv += v;
    }
    mr /= nf;
    mv /= nf;
    let (mut sr, mut sv, mut srv, mut st) = (0.0, 0.0, 0.0, 0.0);
    for &(r, v) in samples {
        let dr = r - mr;
        let dv = v - mv;
        sr += dr * dr;
        sv += dv * dv;
        srv += dr * dv;
        let dt = (r + v) - (mr + mv);
        st += dt * dt;
    }
    let denom = nf - 1.0;
    Ok(VarianceDecomposition {
        var_reward: sr / denom,
        var_next_value: sv / denom,
        cov_reward_value: srv / denom,
        var_target: st / denom,
    })
}

/// A scalar reward law with known moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardLaw {
    /// `value` with probability `p`, else 0.
    BernoulliScaled { p: f64, value: f64 },
    Gaussian { mean: f64, std: f64 },
}

impl RewardLaw {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            RewardLaw::BernoulliScaled { p, value } => {
                if rng.random::<f64>() < p {
                    value
                } else {
                    0.0
                }
            }
            RewardLaw::Gaussian { mean, std } => {
                let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(rng);
                mean + std * z
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            RewardLaw::BernoulliScaled { p, value } => p * value,
            RewardLaw::Gaussian { mean, .. } => mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            RewardLaw::BernoulliScaled { p, value } => p * (1.0 - p) * value * value,
            RewardLaw::Gaussian { std, .. } => std * std,
        }
    }
}

/// Empirical `var[mean of N samples] / var[r]`; converges to `1/N`.
pub fn verify_sample_mean_variance(
    law: &RewardLaw,
    n: usize,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    assert!(n >= 1 && trials >= 2);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..trials {
        let mut acc = 0.0;
        for _ in 0..n {
            acc += law.sample(rng);
        }
        let mean = acc / n as f64;
        sum += mean;
        sumsq += mean * mean;
    }
    let tf = trials as f64;
    let grand = sum / tf;
    let var = (sumsq - tf * grand * grand) / (tf - 1.0);
    var / law.variance()
}

/// Batched version: one ratio per batch, for standard-error estimates.
pub fn eq4_batch_ratios(
    law: &RewardLaw,
    n: usize,
    batches: usize,
    trials_per_batch: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    (0..batches)
        .map(|_| verify_sample_mean_variance(law, n, trials_per_batch, rng))
        .collect()
}

/// A joint law of (reward, next-state value) with known covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JointLaw {
    /// Reward and value independent; value is Gaussian.
    Independent {
        reward: RewardLaw,
        value_mean: f64,
        value_std: f64,
    },
    /// `V(s') = scale * r + offset` (deterministic coupling).
    LinearValue { reward: RewardLaw, scale: f64, offset: f64 },
    /// Two-point mixture: `(r, v) = a` with probability `p`, else `b`.
    TwoPoint { p: f64, a: (f64, f64), b: (f64, f64) },
}

impl JointLaw {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        match *self {
            JointLaw::Independent {
                reward,
                value_mean,
                value_std,
            } => {
                let r = reward.sample(rng);
                let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(rng);
                (r, value_mean + value_std * z)
            }
            JointLaw::LinearValue { reward, scale, offset } => {
                let r = reward.sample(rng);
                (r, scale * r + offset)
            }
            JointLaw::TwoPoint { p, a, b } => {
                if rng.random::<f64>() < p {
                    a
                } else {
                    b
                }
            }
        }
    }

    pub fn var_reward(&self) -> f64 {
        match *self {
            JointLaw::Independent { reward, .. } | JointLaw::LinearValue { reward, .. } => {
                reward.variance()
            }
            JointLaw::TwoPoint { p, a, b } => p * (1.0 - p) * (a.0 - b.0) * (a.0 - b.0),
        }
    }

    pub fn cov(&self) -> f64 {
        match *self {
            JointLaw::Independent { .. } => 0.0,
            JointLaw::LinearValue { reward, scale, .. } => scale * reward.variance(),
            JointLaw::TwoPoint { p, a, b } => p * (1.0 - p) * (a.0 - b.0) * (a.1 - b.1),
        }
    }
}

/// Result of the covariance-scaling measurement.
#[derive(Debug, Clone, Copy)]
pub struct CovScaling {
    /// Measured `cov[mean of N rewards, gamma*V(s'_1)]`.
    pub empirical: f64,
    /// Analytic `cov[r, gamma*V(s')]` of the joint law.
    pub analytic: f64,
}

impl CovScaling {
    /// `empirical / analytic`; converges to `1/N`. Meaningless when the
    /// analytic covariance is 0 — check `empirical` directly then.
    pub fn ratio(&self) -> f64 {
        self.empirical / self.analytic
    }
}

/// Measure how the covariance with the next value scales when the reward
/// is replaced by the mean of `N` i.i.d. replays (the first replay being
/// the measured transition).
pub fn verify_cov_scaling(
    joint: &JointLaw,
    n: usize,
    gamma: f64,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> CovScaling {
    assert!(n >= 1 && trials >= 2);
    let mut pairs = Vec::with_capacity(trials);
    for _ in 0..trials {
        let (r1, v1) = joint.sample(rng);
        let mut acc = r1;
        for _ in 1..n {
            acc += joint.sample(rng).0;
        }
        pairs.push((acc / n as f64, gamma * v1));
    }
    let d = decompose_target_variance(&pairs).expect("trials >= 2");
    CovScaling {
        empirical: d.cov_reward_value,
        analytic: gamma * joint.cov(),
    }
}

/// The measured gap `var[target with estimator] - var[target with sampled
/// reward]`, compared against the analytic right-hand side
/// `(1/N - 1) var[r] + (2/N - 2) cov[r, gamma*V(s')]` evaluated on the
/// sampled decomposition's own moments.
#[derive(Debug, Clone, Copy)]
pub struct VarianceGap {
    pub gap: f64,
    pub analytic_rhs: f64,
    pub eq_matches: bool,
    /// `var[r] > -2 cov[r, gamma*V(s')]`: the condition under which the
    /// estimator can only lower the target variance.
    pub condition_holds: bool,
}

pub fn variance_gap(
    sampled: &VarianceDecomposition,
    estimated: &VarianceDecomposition,
    n: usize,
    mc_tol: f64,
) -> VarianceGap {
    assert!(n >= 1);
    let inv = 1.0 / n as f64;
    let gap = estimated.var_target - sampled.var_target;
    let rhs = (inv - 1.0) * sampled.var_reward + (2.0 * inv - 2.0) * sampled.cov_reward_value;
    VarianceGap {
        gap,
        analytic_rhs: rhs,
        eq_matches: (gap - rhs).abs() <= mc_tol,
        condition_holds: sampled.var_reward > -2.0 * sampled.cov_reward_value,
    }
}

/// Batched Monte-Carlo estimate of the variance gap for a joint law.
#[derive(Debug, Clone, Copy)]
pub struct GapEstimate {
    pub mean_gap: f64,
    pub se: f64,
    /// RHS from the law's analytic moments.
    pub analytic_rhs: f64,
    /// Analytic `var[r] > -2 cov` condition.
    pub condition_holds: bool,
}

pub fn estimate_gap(
    joint: &JointLaw,
    n: usize,
    gamma: f64,
    batches: usize,
    trials_per_batch: usize,
    rng: &mut ChaCha8Rng,
) -> GapEstimate {
    assert!(batches >= 2);
    let mut gaps = Vec::with_capacity(batches);
    for _ in 0..batches {
        let mut sampled = Vec::with_capacity(trials_per_batch);
        let mut estimated = Vec::with_capacity(trials_per_batch);
        for _ in 0..trials_per_batch {
            let (r1, v1) = joint.sample(rng);
            let mut acc = r1;
            for _ in 1..n {
                acc += joint.sample(rng).0;
            }
            sampled.push((r1, gamma * v1));
            estimated.push((acc / n as f64, gamma * v1));
        }
        let ds = decompose_target_variance(&sampled).expect("trials >= 2");
        let de = decompose_target_variance(&estimated).expect("trials >= 2");
        gaps.push(de.var_target - ds.var_target);
    }
    let k = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / k;
    let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let inv = 1.0 / n as f64;
    let var_r = joint.var_reward();
    let cov = gamma * joint.cov();
    GapEstimate {
        mean_gap: mean,
        se: (var / k).sqrt(),
        analytic_rhs: (inv - 1.0) * var_r + (2.0 * inv - 2.0) * cov,
        condition_holds: var_r > -2.0 * cov,
    }
}

/// Per-trial reward statistics under a frozen policy, matching the
/// var/MSE measurement protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardStats {
    pub var_r_true: f64,
    pub var_r_corr: f64,
    pub var_rhat: f64,
    pub mse_corr_vs_true: f64,
    pub mse_rhat_vs_true: f64,
}

/// A reward estimator that has already been fitted.
pub enum FittedEstimator<'a> {
    Tabular(&'a SampleMeanEstimator),
    Net {
        net: &'a Mlp,
        mode: FeatureMode,
        space: ActionSpace,
    },
}

impl FittedEstimator<'_> {
    fn predict(&self, t: &TransitionTuple) -> f64 {
        match self {
            FittedEstimator::Tabular(est) => {
                est.mean(est.key_for(t)).unwrap_or(t.reward_observed)
            }
            FittedEstimator::Net { net, mode, space } => {
                let x = features_for(*mode, *space, t);
                net.forward(&x)[0]
            }
        }
    }
}

/// Run `trials` independent evaluations of `episodes` episodes each and
/// report variance/MSE statistics over all visited transitions. The MSE
/// columns compare against the sampled true reward of each transition.
pub fn measure_reward_statistics(
    env: &EnvKind,
    policy: &mut dyn FnMut(&StateRepr, &mut ChaCha8Rng) -> Action,
    noise: Option<&NoiseModel>,
    estimator: &FittedEstimator,
    episodes: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<RewardStats>> {
    if let FittedEstimator::Tabular(est) = estimator {
        if !est.is_fitted() {
            return Err(LabError::EstimatorNotFitted);
        }
    }
    let mut out = Vec::with_capacity(trials);
    for trial in 0..trials {
        let base = crate::rng::cell_base(seed, trial as u64);
        let mut env_rng = crate::rng::stream(base, crate::rng::ENV_STREAM);
        let mut action_rng = crate::rng::stream(base, crate::rng::ACTION_STREAM);
        let mut noisy = crate::noise::NoisyEnv::new(
            env.clone(),
            noise.cloned(),
            crate::rng::stream(base, crate::rng::NOISE_STREAM),
        );
        let mut trues = Vec::new();
        let mut corrs = Vec::new();
        let mut rhats = Vec::new();
        for _ in 0..episodes {
            let mut state = noisy.reset(&mut env_rng);
            while !noisy.is_terminal() {
                let action = policy(&state, &mut action_rng);
                let t = noisy.step(&action, &mut env_rng);
                trues.push(t.reward_true);
                corrs.push(t.reward_observed);
                rhats.push(estimator.predict(&t));
                state = t.next_state.clone();
            }
        }
        out.push(RewardStats {
            var_r_true: unbiased_var(&trues),
            var_r_corr: unbiased_var(&corrs),
            var_rhat: unbiased_var(&rhats),
            mse_corr_vs_true: mse(&corrs, &trues),
            mse_rhat_vs_true: mse(&rhats, &trues),
        });
    }
    Ok(out)
}

/// Mean of each field across trials.
pub fn mean_reward_stats(stats: &[RewardStats]) -> RewardStats {
    let n = stats.len() as f64;
    RewardStats {
        var_r_true: stats.iter().map(|s| s.var_r_true).sum::<f64>() / n,
        var_r_corr: stats.iter().map(|s| s.var_r_corr).sum::<f64>() / n,
        var_rhat: stats.iter().map(|s| s.var_rhat).sum::<f64>() / n,
        mse_corr_vs_true: stats.iter().map(|s| s.mse_corr_vs_true).sum::<f64>() / n,
        mse_rhat_vs_true: stats.iter().map(|s| s.mse_rhat_vs_true).sum::<f64>() / n,
    }
}

fn unbiased_var(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n
}
