//! Adaptive moment estimation over a flat parameter vector.

use crate::error::LabError;
use crate::Result;

/// First/second-moment adaptive optimizer with bias correction.
/// Defaults: beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(dim: usize) -> Adam {
        Adam {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update step: advances the moments and moves `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        assert!(lr > 0.0, "learning rate must be positive");
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(LabError::NonFinite("optimizer gradient".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut adam = Adam::new(3);
        let mut params = vec![1.0, -2.0, 0.5];
        let before = params.clone();
        for _ in 0..10 {
            adam.step(&mut params, &[0.0, 0.0, 0.0], 0.1).unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn converges_on_one_dimensional_quadratic() {
        let target = 0.5;
        let mut adam = Adam::new(1);
        let mut params = vec![0.0];
        for _ in 0..500 {
            let g = 2.0 * (params[0] - target);
            adam.step(&mut params, &[g], 0.01).unwrap();
        }
        assert!(
            (params[0] - target).abs() < 1e-3,
            "ended at {}",
            params[0]
        );
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut adam = Adam::new(1);
        let mut params = vec![0.0];
        assert!(adam.step(&mut params, &[f64::NAN], 0.1).is_err());
    }

    #[test]
    fn deterministic_given_same_inputs() {
        let run = || {
            let mut adam = Adam::new(2);
            let mut params = vec![0.3, -0.3];
            for i in 0..100 {
                let g = [params[0] + i as f64 * 0.01, params[1] * 2.0];
                adam.step(&mut params, &g, 0.005).unwrap();
            }
            params
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }
}
