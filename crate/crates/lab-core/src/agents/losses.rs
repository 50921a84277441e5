//! Policy and critic objectives with analytic gradients.

use super::policy::{Policy, PolicyGrad};
use crate::env::Action;
use crate::nn::{mse_scalar_loss, Mlp};

/// Policy-gradient loss `mean(-log pi(a|s) * A) - ent_coef * mean(H)`.
/// Advantages are treated as constants. Returns the loss and gradient.
pub fn a2c_actor_loss(
    policy: &Policy,
    observations: &[Vec<f64>],
    actions: &[Action],
    advantages: &[f64],
    ent_coef: f64,
) -> (f64, PolicyGrad) {
    assert!(!observations.is_empty(), "empty batch");
    assert_eq!(observations.len(), actions.len());
    assert_eq!(observations.len(), advantages.len());
    let b = observations.len() as f64;
    let scale = 1.0 / b;
    let mut grad = PolicyGrad::zeros(policy);
    let mut loss = 0.0;
    for i in 0..observations.len() {
        let (logp, entropy) = policy.accumulate_loss_grad(
            &observations[i],
            &actions[i],
            advantages[i],
            ent_coef,
            scale,
            &mut grad,
        );
        assert!(logp.is_finite(), "non-finite log-probability");
        loss += scale * (-logp * advantages[i] - ent_coef * entropy);
    }
    (loss, grad)
}

/// Clipped-surrogate policy loss
/// `mean(-min(rho*A, clip(rho, 1-eps, 1+eps)*A)) - ent_coef * mean(H)`
/// with `rho = exp(log pi - old_log_prob)`. Steps where the clipped
/// branch is selected and the ratio sits outside the clip range
/// contribute zero gradient.
pub fn clipped_surrogate_loss(
    policy: &Policy,
    observations: &[Vec<f64>],
    actions: &[Action],
    old_log_probs: &[f64],
    advantages: &[f64],
    clip_epsilon: f64,
    ent_coef: f64,
) -> (f64, PolicyGrad) {
    assert!(!observations.is_empty(), "empty batch");
    assert_eq!(observations.len(), actions.len());
    assert_eq!(observations.len(), old_log_probs.len());
    assert_eq!(observations.len(), advantages.len());
    assert!(clip_epsilon > 0.0 && clip_epsilon < 1.0);
    let b = observations.len() as f64;
    let scale = 1.0 / b;
    let mut grad = PolicyGrad::zeros(policy);
    let mut loss = 0.0;
    for i in 0..observations.len() {
        let logp = policy.log_prob(&observations[i], &actions[i]);
        assert!(logp.is_finite(), "non-finite log-probability");
        let rho = (logp - old_log_probs[i]).exp();
        let adv = advantages[i];
        let unclipped = rho * adv;
        let clipped = rho.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon) * adv;
        loss += scale * -unclipped.min(clipped);
        // gradient flows only through the unclipped branch when selected
        let w = if unclipped <= clipped { rho * adv } else { 0.0 };
        let (_, entropy) = policy.accumulate_loss_grad(
            &observations[i],
            &actions[i],
            w,
            ent_coef,
            scale,
            &mut grad,
        );
        loss += scale * -ent_coef * entropy;
    }
    (loss, grad)
}

/// Critic regression `mean((V(s) - target)^2)`; targets are constants.
pub fn critic_loss(critic: &Mlp, observations: &[Vec<f64>], targets: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(
        observations.len(),
        targets.len(),
        "critic batch/target mismatch"
    );
    mse_scalar_loss(critic, observations, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_difference_grad, max_rel_error, InitScheme};
    use crate::rng;

    fn toy_discrete() -> (Policy, Vec<Vec<f64>>, Vec<Action>) {
        let mut r = rng::stream(120, rng::PARAM_STREAM);
        let policy = Policy::new_discrete(2, 3, 5, &mut r);
        let obs = vec![vec![0.2, -0.6], vec![-0.1, 0.4], vec![0.9, 0.9]];
        let actions = vec![Action::Discrete(0), Action::Discrete(2), Action::Discrete(1)];
        (policy, obs, actions)
    }

    #[test]
    fn zero_advantages_zero_policy_term() {
        let (policy, obs, actions) = toy_discrete();
        let (loss, grad) = a2c_actor_loss(&policy, &obs, &actions, &[0.0; 3], 0.0);
        assert_eq!(loss, 0.0);
        assert!(grad.flat().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn positive_advantage_pushes_action_probability_up() {
        let mut r = rng::stream(121, rng::PARAM_STREAM);
        let mut policy = Policy::new_discrete(1, 2, 4, &mut r);
        let obs = vec![vec![0.5]];
        let actions = vec![Action::Discrete(0)];
        let before = policy.log_prob(&obs[0], &actions[0]);
        let (loss, grad) = a2c_actor_loss(&policy, &obs, &actions, &[1.0], 0.0);
        assert!((loss + before).abs() < 1e-12, "loss is -log pi(a)");
        // take a small gradient-descent step
        let mut flat = policy.params_flat();
        for (p, g) in flat.iter_mut().zip(grad.flat().iter()) {
            *p -= 0.05 * g;
        }
        policy.set_params_flat(&flat);
        assert!(policy.log_prob(&obs[0], &actions[0]) > before);
    }

    #[test]
    fn a2c_gradient_matches_finite_differences() {
        let (policy, obs, actions) = toy_discrete();
        let advantages = [0.8, -1.2, 0.3];
        let (_, grad) = a2c_actor_loss(&policy, &obs, &actions, &advantages, 0.01);
        let mut f = |flat: &[f64]| {
            let mut probe = policy.clone();
            probe.set_params_flat(flat);
            a2c_actor_loss(&probe, &obs, &actions, &advantages, 0.01).0
        };
        let numeric = finite_difference_grad(&mut f, &policy.params_flat(), 1e-5);
        let err = max_rel_error(&grad.flat(), &numeric, 1e-4);
        assert!(err < 1e-4, "max rel error {err}");
    }

    #[test]
    fn unit_ratio_recovers_negative_mean_advantage() {
        let (policy, obs, actions) = toy_discrete();
        let old: Vec<f64> = obs
            .iter()
            .zip(actions.iter())
            .map(|(o, a)| policy.log_prob(o, a))
            .collect();
        let advantages = [1.0, -0.5, 0.25];
        let (loss, _) =
            clipped_surrogate_loss(&policy, &obs, &actions, &old, &advantages, 0.2, 0.0);
        let mean_adv = advantages.iter().sum::<f64>() / 3.0;
        assert!((loss + mean_adv).abs() < 1e-12);
    }

    #[test]
    fn ratio_two_with_positive_advantage_clips_to_bound() {
        let (policy, obs, actions) = toy_discrete();
        // old log-probs offset so rho = 2 exactly
        let old: Vec<f64> = obs
            .iter()
            .zip(actions.iter())
            .map(|(o, a)| policy.log_prob(o, a) - 2.0f64.ln())
            .collect();
        let advantages = [1.0, 1.0, 1.0];
        let (loss, grad) =
            clipped_surrogate_loss(&policy, &obs, &actions, &old, &advantages, 0.2, 0.0);
        // per-step objective is min(2A, 1.2A) = 1.2A
        assert!((loss + 1.2).abs() < 1e-12, "loss {loss}");
        // clipping binds with the clipped branch selected: zero gradient
        assert!(grad.flat().iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn clipped_gradient_matches_finite_differences_away_from_kinks() {
        let (policy, obs, actions) = toy_discrete();
        // keep all ratios away from the clip boundaries at 0.8 and 1.2
        let offsets = [-0.5, 0.1, 0.4];
        let old: Vec<f64> = obs
            .iter()
            .zip(actions.iter())
            .zip(offsets.iter())
            .map(|((o, a), off)| policy.log_prob(o, a) + off)
            .collect();
        let advantages = [0.7, -0.9, 1.3];
        let (_, grad) =
            clipped_surrogate_loss(&policy, &obs, &actions, &old, &advantages, 0.2, 0.01);
        let mut f = |flat: &[f64]| {
            let mut probe = policy.clone();
            probe.set_params_flat(flat);
            clipped_surrogate_loss(&probe, &obs, &actions, &old, &advantages, 0.2, 0.01).0
        };
        let numeric = finite_difference_grad(&mut f, &policy.params_flat(), 1e-5);
        let err = max_rel_error(&grad.flat(), &numeric, 1e-4);
        assert!(err < 1e-4, "max rel error {err}");
    }

    #[test]
    fn critic_exact_fit_and_constant_minimum() {
        let mut critic = Mlp::zeros(&[1, 1]);
        critic.params[1] = 1.0; // constant output 1
        let obs = vec![vec![0.0], vec![0.0]];
        let (loss, _) = critic_loss(&critic, &obs, &[1.0, 1.0]);
        assert_eq!(loss, 0.0);
        // targets {0, 2}: constant c loss = ((c-0)^2 + (c-2)^2)/2, min at 1
        let loss_at = |c: f64| {
            let mut net = Mlp::zeros(&[1, 1]);
            net.params[1] = c;
            critic_loss(&net, &obs, &[0.0, 2.0]).0
        };
        assert!(loss_at(1.0) < loss_at(0.9));
        assert!(loss_at(1.0) < loss_at(1.1));
        assert!((loss_at(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let mut r = rng::stream(122, rng::PARAM_STREAM);
        let critic = Mlp::init(&[2, 6, 1], InitScheme::default(), &mut r);
        let obs = vec![vec![0.2, -0.3], vec![0.5, 0.5], vec![-0.8, 0.1]];
        let targets = [0.4, -0.2, 1.1];
        let (_, grad) = critic_loss(&critic, &obs, &targets);
        let mut f = |p: &[f64]| {
            let probe = Mlp {
                spec: critic.spec.clone(),
                params: p.to_vec(),
            };
            critic_loss(&probe, &obs, &targets).0
        };
        let numeric = finite_difference_grad(&mut f, &critic.params, 1e-5);
        let err = max_rel_error(&grad, &numeric, 1e-4);
        assert!(err < 1e-4, "max rel error {err}");
    }
}
