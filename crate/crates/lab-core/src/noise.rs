//! Reward-corruption channels and their analytic moments.
//!
//! Channels only ever rewrite `reward_observed`; `reward_true` rides along
//! untouched so that evaluation and the variance diagnostics can see both.
//! The channel owns its own RNG stream, independent of the environment
//! stream, so toggling noise never perturbs trajectories.

use crate::env::{Environment, EnvKind, StateRepr, TransitionTuple};
use crate::error::LabError;
use crate::Result;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rand_chacha::ChaCha8Rng;

/// Which corruption is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Additive zero-mean Gaussian: `r + psi`, `psi ~ N(0, sigma^2)`.
    Gaussian,
    /// With probability epsilon, replace the reward by `U(low, high)`.
    UniformReplace,
    /// With probability epsilon, replace the reward by exactly 0.
    Sparsify,
}

/// A corruption channel plus its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub sigma: f64,
    pub epsilon: f64,
    pub low: f64,
    pub high: f64,
}

impl NoiseModel {
    pub fn gaussian(sigma: f64) -> Result<NoiseModel> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(LabError::InvalidParam(format!("sigma {sigma} must be >= 0")));
        }
        Ok(NoiseModel {
            kind: NoiseKind::Gaussian,
            sigma,
            epsilon: 0.0,
            low: -1.0,
            high: 1.0,
        })
    }

    pub fn uniform_replace(epsilon: f64) -> Result<NoiseModel> {
        NoiseModel::uniform_replace_bounded(epsilon, -1.0, 1.0)
    }

    pub fn uniform_replace_bounded(epsilon: f64, low: f64, high: f64) -> Result<NoiseModel> {
        check_epsilon(epsilon)?;
        if !(low <= high) {
            return Err(LabError::InvalidParam(format!(
                "uniform bounds ({low}, {high}) need low <= high"
            )));
        }
        Ok(NoiseModel {
            kind: NoiseKind::UniformReplace,
            sigma: 0.0,
            epsilon,
            low,
            high,
        })
    }

    pub fn sparsify(epsilon: f64) -> Result<NoiseModel> {
        check_epsilon(epsilon)?;
        Ok(NoiseModel {
            kind: NoiseKind::Sparsify,
            sigma: 0.0,
            epsilon,
            low: -1.0,
            high: 1.0,
        })
    }

    /// Parse a CLI-style spec: `none`, `gaussian:0.4`, `uniform:0.3`,
    /// `sparsity:0.5` (also accepts `sparsify`).
    pub fn parse_spec(spec: &str) -> Result<Option<NoiseModel>> {
        if spec == "none" {
            return Ok(None);
        }
        let (kind, param) = spec
            .split_once(':')
            .ok_or_else(|| LabError::Config(format!("noise spec `{spec}` needs kind:param")))?;
        let value: f64 = param
            .parse()
            .map_err(|_| LabError::Config(format!("bad noise parameter `{param}`")))?;
        let model = match kind {
            "gaussian" => NoiseModel::gaussian(value)?,
            "uniform" => NoiseModel::uniform_replace(value)?,
            "sparsity" | "sparsify" => NoiseModel::sparsify(value)?,
            other => return Err(LabError::Config(format!("unknown noise kind `{other}`"))),
        };
        Ok(Some(model))
    }

    /// Kind id used in CSV output.
    pub fn kind_id(&self) -> &'static str {
        match self.kind {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::UniformReplace => "uniform",
            NoiseKind::Sparsify => "sparsity",
        }
    }

    /// The channel's level parameter (sigma or epsilon).
    pub fn level(&self) -> f64 {
        match self.kind {
            NoiseKind::Gaussian => self.sigma,
            _ => self.epsilon,
        }
    }

    /// Rebuild the same kind of channel at a different level.
    pub fn with_level(&self, level: f64) -> Result<NoiseModel> {
        match self.kind {
            NoiseKind::Gaussian => NoiseModel::gaussian(level),
            NoiseKind::UniformReplace => {
                NoiseModel::uniform_replace_bounded(level, self.low, self.high)
            }
            NoiseKind::Sparsify => NoiseModel::sparsify(level),
        }
    }

    /// Corrupt a single reward sample.
    pub fn corrupt(&self, reward_true: f64, rng: &mut ChaCha8Rng) -> f64 {
        match self.kind {
            NoiseKind::Gaussian => {
                let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(rng);
                reward_true + self.sigma * z
            }
            NoiseKind::UniformReplace => {
                if rng.random::<f64>() < self.epsilon {
                    if self.low == self.high {
                        self.low
                    } else {
                        rng.random_range(self.low..self.high)
                    }
                } else {
                    reward_true
                }
            }
            NoiseKind::Sparsify => {
                if rng.random::<f64>() < self.epsilon {
                    0.0
                } else {
                    reward_true
                }
            }
        }
    }

    /// Mean of the corrupted reward given the true mean.
    pub fn expected_corrupted(&self, true_mean: f64) -> f64 {
        match self.kind {
            NoiseKind::Gaussian => true_mean,
            NoiseKind::UniformReplace => {
                (1.0 - self.epsilon) * true_mean + self.epsilon * 0.5 * (self.low + self.high)
            }
            NoiseKind::Sparsify => (1.0 - self.epsilon) * true_mean,
        }
    }

    /// Variance of the corrupted reward given the true mean and variance,
    /// by the law of total variance for the mixture channels.
    pub fn corrupted_variance(&self, true_mean: f64, true_var: f64) -> f64 {
        assert!(true_var >= 0.0, "true_var must be nonnegative");
        match self.kind {
            NoiseKind::Gaussian => true_var + self.sigma * self.sigma,
            NoiseKind::UniformReplace => {
                let e = self.epsilon;
                let mu_u = 0.5 * (self.low + self.high);
                let var_u = (self.high - self.low).powi(2) / 12.0;
                let second = (1.0 - e) * (true_var + true_mean * true_mean)
                    + e * (var_u + mu_u * mu_u);
                let mean = self.expected_corrupted(true_mean);
                second - mean * mean
            }
            NoiseKind::Sparsify => {
                let e = self.epsilon;
                (1.0 - e) * true_var + e * (1.0 - e) * true_mean * true_mean
            }
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(LabError::InvalidParam(format!(
            "epsilon {epsilon} outside [0, 1]"
        )));
    }
    Ok(())
}

/// An environment with an attached corruption channel. The caller keeps
/// the environment stream; the channel stream lives here.
#[derive(Debug, Clone)]
pub struct NoisyEnv {
    pub env: EnvKind,
    noise: Option<NoiseModel>,
    noise_rng: ChaCha8Rng,
}

impl NoisyEnv {
    pub fn new(env: EnvKind, noise: Option<NoiseModel>, noise_rng: ChaCha8Rng) -> NoisyEnv {
        NoisyEnv {
            env,
            noise,
            noise_rng,
        }
    }

    pub fn reset(&mut self, env_rng: &mut ChaCha8Rng) -> StateRepr {
        self.env.reset(env_rng)
    }

    pub fn step(
        &mut self,
        action: &crate::env::Action,
        env_rng: &mut ChaCha8Rng,
    ) -> TransitionTuple {
        let mut t = self.env.step(action, env_rng);
        if let Some(model) = &self.noise {
            t.reward_observed = model.corrupt(t.reward_true, &mut self.noise_rng);
        }
        t
    }

    pub fn is_terminal(&self) -> bool {
        self.env.is_terminal()
    }

    pub fn current_state(&self) -> StateRepr {
        self.env.current_state()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_parameter_channels_are_exact_identities() {
        let mut r = rng::stream(20, rng::NOISE_STREAM);
        let g = NoiseModel::gaussian(0.0).unwrap();
        let u = NoiseModel::uniform_replace(0.0).unwrap();
        let s = NoiseModel::sparsify(0.0).unwrap();
        for &x in &[3.2, -1.75, 0.0, 1e9] {
            assert_eq!(g.corrupt(x, &mut r), x);
            assert_eq!(u.corrupt(x, &mut r), x);
            assert_eq!(s.corrupt(x, &mut r), x);
        }
    }

    #[test]
    fn certain_sparsify_zeroes_everything() {
        let mut r = rng::stream(21, rng::NOISE_STREAM);
        let s = NoiseModel::sparsify(1.0).unwrap();
        assert_eq!(s.corrupt(7.0, &mut r), 0.0);
    }

    #[test]
    fn uniform_replace_mixture_mean() {
        let mut r = rng::stream(22, rng::NOISE_STREAM);
        let m = NoiseModel::uniform_replace(0.3).unwrap();
        let trials = 1_000_000usize;
        let mut sum = 0.0;
        for _ in 0..trials {
            sum += m.corrupt(1.0, &mut r);
        }
        let mean = sum / trials as f64;
        let var = m.corrupted_variance(1.0, 0.0);
        let se = (var / trials as f64).sqrt();
        assert!((mean - 0.7).abs() <= 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn expected_corrupted_matches_analytic_forms() {
        let s = NoiseModel::sparsify(0.9).unwrap();
        assert!((s.expected_corrupted(2.0) - 0.2).abs() < 1e-12);
        let g = NoiseModel::gaussian(0.4).unwrap();
        assert_eq!(g.expected_corrupted(5.0), 5.0);
        let u = NoiseModel::uniform_replace(0.5).unwrap();
        assert!((u.expected_corrupted(1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn corrupted_variance_analytic_forms() {
        let g = NoiseModel::gaussian(0.4).unwrap();
        assert!((g.corrupted_variance(3.0, 1.0) - 1.16).abs() < 1e-12);
        let s0 = NoiseModel::sparsify(0.0).unwrap();
        assert_eq!(s0.corrupted_variance(1.0, 0.7), 0.7);
        let s = NoiseModel::sparsify(0.5).unwrap();
        assert!((s.corrupted_variance(1.0, 0.0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn empirical_mean_matches_expected_for_every_channel() {
        let trials = 1_000_000usize;
        let r_fixed = 1.5;
        let channels = [
            NoiseModel::gaussian(0.4).unwrap(),
            NoiseModel::uniform_replace(0.3).unwrap(),
            NoiseModel::sparsify(0.6).unwrap(),
        ];
        for (i, m) in channels.iter().enumerate() {
            let mut rng = rng::stream(30 + i as u64, rng::NOISE_STREAM);
            let mut sum = 0.0;
            for _ in 0..trials {
                sum += m.corrupt(r_fixed, &mut rng);
            }
            let mean = sum / trials as f64;
            let expect = m.expected_corrupted(r_fixed);
            let se = (m.corrupted_variance(r_fixed, 0.0) / trials as f64).sqrt();
            assert!(
                (mean - expect).abs() <= 4.0 * se,
                "{}: mean {mean} expect {expect} se {se}",
                m.kind_id()
            );
        }
    }

    #[test]
    fn same_seed_gives_identical_corrupted_stream() {
        let m = NoiseModel::uniform_replace(0.5).unwrap();
        let run = |seed: u64| -> Vec<f64> {
            let mut rng = rng::stream(seed, rng::NOISE_STREAM);
            (0..256).map(|i| m.corrupt(i as f64, &mut rng)).collect()
        };
        assert_eq!(run(77), run(77));
        assert_ne!(run(77), run(78));
    }

    #[test]
    fn monte_carlo_confirms_mixture_variance() {
        let m = NoiseModel::uniform_replace_bounded(0.4, -2.0, 1.0).unwrap();
        let mut rng = rng::stream(40, rng::NOISE_STREAM);
        let trials = 1_000_000usize;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..trials {
            let x = m.corrupt(0.8, &mut rng);
            sum += x;
            sq += x * x;
        }
        let mean = sum / trials as f64;
        let var = sq / trials as f64 - mean * mean;
        let analytic = m.corrupted_variance(0.8, 0.0);
        assert!(
            (var - analytic).abs() / analytic < 0.01,
            "var {var} vs {analytic}"
        );
    }

    #[test]
    fn parse_spec_forms() {
        assert!(NoiseModel::parse_spec("none").unwrap().is_none());
        let g = NoiseModel::parse_spec("gaussian:0.4").unwrap().unwrap();
        assert_eq!(g.kind, NoiseKind::Gaussian);
        assert_eq!(g.sigma, 0.4);
        assert!(NoiseModel::parse_spec("uniform:2.0").is_err());
        assert!(NoiseModel::parse_spec("what:0.1").is_err());
        assert!(NoiseModel::parse_spec("gaussian").is_err());
    }
}
