//! Minimal feedforward substrate: an MLP with tanh hidden layers and a
//! linear output, manual backpropagation over a flat parameter vector,
//! finite-difference verification, and an adaptive first-order optimizer.

mod adam;
mod io;
mod losses;

pub use adam::Adam;
pub use io::{load_mlp, load_mlp_with_extra, save_mlp, write_mlp, write_mlp_with_extra, read_mlp, read_mlp_with_extra};
pub use losses::{mse_scalar_loss, reward_regression_loss};

use crate::env::{Action, ActionSpace, TransitionTuple};
use crate::error::LabError;
use crate::Result;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Layer sizes of an MLP, e.g. `[4, 64, 64, 1]`. Weights for layer `l`
/// are stored row-major `(out x in)` followed by the `out` biases, layers
/// concatenated into one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub sizes: Vec<usize>,
}

impl MlpSpec {
    pub fn new(sizes: &[usize]) -> MlpSpec {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0));
        MlpSpec {
            sizes: sizes.to_vec(),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Total parameter count: sum of `(fan_in + 1) * fan_out`.
    pub fn param_count(&self) -> usize {
        self.sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }
}

/// Gain settings for the orthogonal-style initialization.
#[derive(Debug, Clone, Copy)]
pub struct InitScheme {
    pub hidden_gain: f64,
    pub output_gain: f64,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme {
            hidden_gain: 1.0,
            output_gain: 1.0,
        }
    }
}

impl InitScheme {
    /// Small output gain keeps early policy outputs near uniform.
    pub fn policy() -> InitScheme {
        InitScheme {
            hidden_gain: 1.0,
            output_gain: 0.01,
        }
    }
}

/// An MLP: spec plus flat parameters. All hidden activations are tanh;
/// the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: Vec<f64>,
}

/// Per-layer activations cached by [`Mlp::forward_cached`];
/// `activations[0]` is the input, the last entry the output.
pub struct ForwardCache {
    pub activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Mlp {
        let spec = MlpSpec::new(sizes);
        let params = vec![0.0; spec.param_count()];
        Mlp { spec, params }
    }

    /// Orthogonal-style random init: each weight matrix gets orthonormal
    /// rows (or columns when fan-out exceeds fan-in) scaled by the gain;
    /// biases start at zero.
    pub fn init(sizes: &[usize], scheme: InitScheme, rng: &mut ChaCha8Rng) -> Mlp {
        let spec = MlpSpec::new(sizes);
        let mut params = Vec::with_capacity(spec.param_count());
        let last = spec.num_layers() - 1;
        for (l, w) in spec.sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let gain = if l == last {
                scheme.output_gain
            } else {
                scheme.hidden_gain
            };
            params.extend(orthogonal(fan_out, fan_in, gain, rng));
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Mlp { spec, params }
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut cache = self.forward_cached(input);
        cache.activations.pop().unwrap()
    }

    /// Forward pass keeping every layer's activations for backprop.
    pub fn forward_cached(&self, input: &[f64]) -> ForwardCache {
        assert_eq!(
            input.len(),
            self.spec.input_dim(),
            "forward input dimension mismatch"
        );
        assert!(
            input.iter().all(|x| x.is_finite()),
            "forward input must be finite"
        );
        let mut activations = Vec::with_capacity(self.spec.sizes.len());
        activations.push(input.to_vec());
        let mut offset = 0usize;
        let last = self.spec.num_layers() - 1;
        for (l, w) in self.spec.sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let biases = &self.params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            let prev = activations.last().unwrap();
            let mut out = Vec::with_capacity(fan_out);
            for o in 0..fan_out {
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                let mut z = biases[o];
                for (wi, xi) in row.iter().zip(prev.iter()) {
                    z += wi * xi;
                }
                out.push(if l == last { z } else { z.tanh() });
            }
            offset += (fan_in + 1) * fan_out;
            activations.push(out);
        }
        ForwardCache { activations }
    }

    /// Backpropagate `dloss/doutput` through the cached pass, accumulating
    /// parameter gradients into `grad` (same layout as `params`). Returns
    /// `dloss/dinput`. Panics with the layer index if a non-finite value
    /// appears.
    pub fn backward(&self, cache: &ForwardCache, dloss_dout: &[f64], grad: &mut [f64]) -> Vec<f64> {
        assert_eq!(grad.len(), self.param_count());
        assert_eq!(dloss_dout.len(), self.spec.output_dim());
        let layers = self.spec.num_layers();
        // per-layer parameter offsets
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0usize;
        for w in self.spec.sizes.windows(2) {
            offsets.push(off);
            off += (w[0] + 1) * w[1];
        }
        let mut delta = dloss_dout.to_vec();
        for l in (0..layers).rev() {
            let fan_in = self.spec.sizes[l];
            let fan_out = self.spec.sizes[l + 1];
            let offset = offsets[l];
            // the cached post-activation of this layer and its input
            let a_out = &cache.activations[l + 1];
            let a_in = &cache.activations[l];
            // linear output layer: dz = delta; tanh layers: dz = delta * (1 - a^2)
            let mut dz = Vec::with_capacity(fan_out);
            for o in 0..fan_out {
                let d = if l == layers - 1 {
                    delta[o]
                } else {
                    delta[o] * (1.0 - a_out[o] * a_out[o])
                };
                assert!(d.is_finite(), "non-finite gradient at layer {l}");
                dz.push(d);
            }
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let (gw, gb) = grad[offset..offset + (fan_in + 1) * fan_out]
                .split_at_mut(fan_in * fan_out);
            let mut dprev = vec![0.0; fan_in];
            for o in 0..fan_out {
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                let grow = &mut gw[o * fan_in..(o + 1) * fan_in];
                for i in 0..fan_in {
                    grow[i] += dz[o] * a_in[i];
                    dprev[i] += row[i] * dz[o];
                }
                gb[o] += dz[o];
            }
            delta = dprev;
        }
        delta
    }
}

fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let (k, d, transpose) = if rows <= cols {
        (rows, cols, false)
    } else {
        (cols, rows, true)
    };
    // Gram-Schmidt over k gaussian vectors of length d
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
        for u in &basis {
            let dot: f64 = v.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
            for (vi, ui) in v.iter_mut().zip(u.iter()) {
                *vi -= dot * ui;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue; // degenerate draw, try again
        }
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        basis.push(v);
    }
    let mut out = vec![0.0; rows * cols];
    for (i, v) in basis.iter().enumerate() {
        for (j, &x) in v.iter().enumerate() {
            let (r, c) = if transpose { (j, i) } else { (i, j) };
            out[r * cols + c] = gain * x;
        }
    }
    out
}

/// Which transition components feed the reward estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    S,
    SA,
    SAS,
}

impl FeatureMode {
    pub fn parse(s: &str) -> Result<FeatureMode> {
        match s {
            "s" => Ok(FeatureMode::S),
            "sa" => Ok(FeatureMode::SA),
            "sas" => Ok(FeatureMode::SAS),
            other => Err(LabError::Config(format!(
                "unknown feature mode `{other}` (expected s|sa|sas)"
            ))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            FeatureMode::S => "s",
            FeatureMode::SA => "sa",
            FeatureMode::SAS => "sas",
        }
    }
}

/// Width of the action features: one-hot for discrete actions, the raw
/// vector for continuous ones.
pub fn action_feature_dim(space: ActionSpace) -> usize {
    match space {
        ActionSpace::Discrete(n) => n,
        ActionSpace::Continuous { dim, .. } => dim,
    }
}

/// Estimator input width for a feature mode.
pub fn feature_dim(mode: FeatureMode, space: ActionSpace, obs_dim: usize) -> usize {
    match mode {
        FeatureMode::S => obs_dim,
        FeatureMode::SA => obs_dim + action_feature_dim(space),
        FeatureMode::SAS => 2 * obs_dim + action_feature_dim(space),
    }
}

/// Build the estimator input for one transition.
pub fn features_for(mode: FeatureMode, space: ActionSpace, t: &TransitionTuple) -> Vec<f64> {
    let mut x = t.state.features.clone();
    if mode == FeatureMode::S {
        return x;
    }
    match (&t.action, space) {
        (Action::Discrete(a), ActionSpace::Discrete(n)) => {
            let mut one_hot = vec![0.0; n];
            one_hot[*a] = 1.0;
            x.extend(one_hot);
        }
        (Action::Continuous(v), ActionSpace::Continuous { .. }) => x.extend(v.iter().copied()),
        _ => panic!("action does not match the action space"),
    }
    if mode == FeatureMode::SAS {
        x.extend(t.next_state.features.iter().copied());
    }
    x
}

/// Central finite-difference gradient of `f` at `params`.
pub fn finite_difference_grad(
    f: &mut dyn FnMut(&[f64]) -> f64,
    params: &[f64],
    h: f64,
) -> Vec<f64> {
    let mut work = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + h;
        let up = f(&work);
        work[i] = orig - h;
        let down = f(&work);
        work[i] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

/// Worst per-coordinate relative error between two gradients, with a
/// magnitude floor so that near-zero coordinates compare absolutely.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
