//! Scalar regression losses over transition batches.

use super::{features_for, FeatureMode, Mlp};
use crate::env::{ActionSpace, TransitionTuple};

/// Mean squared error of the network's scalar output against per-input
/// targets. Returns the loss and the parameter gradient.
pub fn mse_scalar_loss(net: &Mlp, inputs: &[Vec<f64>], targets: &[f64]) -> (f64, Vec<f64>) {
    assert!(!inputs.is_empty(), "empty batch");
    assert_eq!(inputs.len(), targets.len());
    assert_eq!(net.spec.output_dim(), 1, "scalar loss needs scalar output");
    let b = inputs.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; net.param_count()];
    for (x, &y) in inputs.iter().zip(targets.iter()) {
        let cache = net.forward_cached(x);
        let pred = cache.output()[0];
        let err = pred - y;
        loss += err * err / b;
        net.backward(&cache, &[2.0 * err / b], &mut grad);
    }
    (loss, grad)
}

/// Regression loss of the reward estimator against the observed
/// (corrupted) reward — the estimator never sees the true reward.
pub fn reward_regression_loss(
    net: &Mlp,
    mode: FeatureMode,
    space: ActionSpace,
    batch: &[TransitionTuple],
) -> (f64, Vec<f64>) {
    assert!(!batch.is_empty(), "empty batch");
    let inputs: Vec<Vec<f64>> = batch.iter().map(|t| features_for(mode, space, t)).collect();
    let targets: Vec<f64> = batch.iter().map(|t| t.reward_observed).collect();
    mse_scalar_loss(net, &inputs, &targets)
}
