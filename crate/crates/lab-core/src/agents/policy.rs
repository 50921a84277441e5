//! Stochastic policy heads over an MLP trunk: softmax for discrete action
//! spaces, diagonal Gaussian with a state-independent learnable log-std
//! for continuous ones.

use crate::env::Action;
use crate::nn::{InitScheme, Mlp};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyHead {
    Discrete(usize),
    Gaussian(usize),
}

/// Parameter gradient of a policy: trunk part plus log-std part.
#[derive(Debug, Clone)]
pub struct PolicyGrad {
    pub net: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl PolicyGrad {
    pub fn zeros(policy: &Policy) -> PolicyGrad {
        PolicyGrad {
            net: vec![0.0; policy.net.param_count()],
            log_std: vec![0.0; policy.log_std.len()],
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.net.clone();
        v.extend(&self.log_std);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub net: Mlp,
    pub log_std: Vec<f64>,
    pub head: PolicyHead,
}

impl Policy {
    pub fn new_discrete(obs_dim: usize, n_actions: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Policy {
        Policy {
            net: Mlp::init(&[obs_dim, hidden, hidden, n_actions], InitScheme::policy(), rng),
            log_std: Vec::new(),
            head: PolicyHead::Discrete(n_actions),
        }
    }

    pub fn new_gaussian(obs_dim: usize, act_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Policy {
        Policy {
            net: Mlp::init(&[obs_dim, hidden, hidden, act_dim], InitScheme::policy(), rng),
            log_std: vec![0.0; act_dim],
            head: PolicyHead::Gaussian(act_dim),
        }
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count() + self.log_std.len()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = self.net.params.clone();
        v.extend(&self.log_std);
        v
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let n = self.net.params.len();
        self.net.params.copy_from_slice(&flat[..n]);
        self.log_std.copy_from_slice(&flat[n..]);
    }

    /// Sample an action and return its log-probability.
    pub fn sample(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> (Action, f64) {
        let out = self.net.forward(obs);
        match self.head {
            PolicyHead::Discrete(n) => {
                let probs = softmax(&out);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = n - 1;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        chosen = i;
                        break;
                    }
                }
                let logp = probs[chosen].max(f64::MIN_POSITIVE).ln();
                (Action::Discrete(chosen), logp)
            }
            PolicyHead::Gaussian(dim) => {
                let normal = Normal::new(0.0, 1.0).unwrap();
                let mut a = Vec::with_capacity(dim);
                for d in 0..dim {
                    let z: f64 = normal.sample(rng);
                    a.push(out[d] + self.log_std[d].exp() * z);
                }
                let logp = self.gaussian_log_prob(&out, &a);
                (Action::Continuous(a), logp)
            }
        }
    }

    /// Log-probability of `action` at `obs` under the current parameters.
    pub fn log_prob(&self, obs: &[f64], action: &Action) -> f64 {
        let out = self.net.forward(obs);
        match (&self.head, action) {
            (PolicyHead::Discrete(_), Action::Discrete(a)) => {
                let lse = log_sum_exp(&out);
                out[*a] - lse
            }
            (PolicyHead::Gaussian(_), Action::Continuous(a)) => self.gaussian_log_prob(&out, a),
            _ => panic!("action does not match policy head"),
        }
    }

    /// Policy entropy at `obs`.
    pub fn entropy(&self, obs: &[f64]) -> f64 {
        match self.head {
            PolicyHead::Discrete(_) => {
                let probs = softmax(&self.net.forward(obs));
                -probs
                    .iter()
                    .filter(|p| **p > 0.0)
                    .map(|p| p * p.ln())
                    .sum::<f64>()
            }
            PolicyHead::Gaussian(_) => self
                .log_std
                .iter()
                .map(|ls| ls + 0.5 * (1.0 + (2.0 * std::f64::consts::PI).ln()))
                .sum(),
        }
    }

    fn gaussian_log_prob(&self, mean: &[f64], action: &[f64]) -> f64 {
        let mut lp = 0.0;
        for d in 0..mean.len() {
            let ls = self.log_std[d];
            let sigma = ls.exp();
            let z = (action[d] - mean[d]) / sigma;
            lp += -0.5 * z * z - ls - 0.5 * (2.0 * std::f64::consts::PI).ln();
        }
        lp
    }

    /// Accumulate the gradient of
    /// `scale * (-w * log pi(a|s) - ent_coef * H(s))`
    /// into `grad`, and return `(log_prob, entropy)` at this sample.
    pub fn accumulate_loss_grad(
        &self,
        obs: &[f64],
        action: &Action,
        w: f64,
        ent_coef: f64,
        scale: f64,
        grad: &mut PolicyGrad,
    ) -> (f64, f64) {
        let cache = self.net.forward_cached(obs);
        let out = cache.output();
        match (&self.head, action) {
            (PolicyHead::Discrete(n), Action::Discrete(a)) => {
                let probs = softmax(out);
                let lse = log_sum_exp(out);
                let logp = out[*a] - lse;
                let entropy = -probs
                    .iter()
                    .filter(|p| **p > 0.0)
                    .map(|p| p * p.ln())
                    .sum::<f64>();
                let mut dz = Vec::with_capacity(*n);
                for j in 0..*n {
                    let indicator = if j == *a { 1.0 } else { 0.0 };
                    let policy_term = w * (probs[j] - indicator);
                    let ent_term = ent_coef * probs[j] * (safe_ln(probs[j]) + entropy);
                    dz.push(scale * (policy_term + ent_term));
                }
                self.net.backward(&cache, &dz, &mut grad.net);
                (logp, entropy)
            }
            (PolicyHead::Gaussian(dim), Action::Continuous(a)) => {
                let logp = self.gaussian_log_prob(out, a);
                let entropy = self.entropy(obs);
                let mut dmean = Vec::with_capacity(*dim);
                for d in 0..*dim {
                    let sigma = self.log_std[d].exp();
                    let diff = a[d] - out[d];
                    // d(-logp)/dmean = -(a - mean)/sigma^2
                    dmean.push(scale * w * (-(diff) / (sigma * sigma)));
                    // d(-logp)/dlogstd = -((a-mean)^2/sigma^2 - 1);
                    // dH/dlogstd = 1
                    grad.log_std[d] += scale
                        * (w * (1.0 - (diff * diff) / (sigma * sigma)) - ent_coef);
                }
                self.net.backward(&cache, &dmean, &mut grad.net);
                (logp, entropy)
            }
            _ => panic!("action does not match policy head"),
        }
    }
}

fn safe_ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        0.0
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}
