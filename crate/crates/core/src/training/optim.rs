use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Adam,
    RmsProp,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const RMSPROP_DECAY: f64 = 0.9;
pub const RMSPROP_EPS: f64 = 1e-7;

/// First-order optimizer over an ordered list of parameter tensors.
///
/// Adam keeps `(m, v)`; RMSProp keeps only `v`, updating
/// `θ ← θ − lr · g / (√v + ε)`.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    algorithm: Algorithm,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
    lr: f64,
}

impl OptimizerState {
    pub fn new(algorithm: Algorithm, shapes: &[(usize, usize)], lr: f64) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect::<Vec<_>>();
        let first = match algorithm {
            Algorithm::Adam => zeros(),
            Algorithm::RmsProp => Vec::new(),
        };
        Self {
            algorithm,
            first,
            second: zeros(),
            step: 0,
            lr,
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. `params` and `grads` must be in the order the
    /// state was created with.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) {
        assert_eq!(params.len(), self.second.len(), "parameter count changed");
        assert_eq!(grads.len(), self.second.len(), "gradient count mismatch");
        self.step += 1;
        let lr = self.lr;
        match self.algorithm {
            Algorithm::Adam => {
                let t = self.step as i32;
                let bc1 = 1.0 - ADAM_BETA1.powi(t);
                let bc2 = 1.0 - ADAM_BETA2.powi(t);
                for (k, p) in params.iter_mut().enumerate() {
                    let g = grads[k].data();
                    let m = self.first[k].data_mut();
                    let v = self.second[k].data_mut();
                    for (i, w) in p.data_mut().iter_mut().enumerate() {
                        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    }
                }
            }
            Algorithm::RmsProp => {
                for (k, p) in params.iter_mut().enumerate() {
                    let g = grads[k].data();
                    let v = self.second[k].data_mut();
                    for (i, w) in p.data_mut().iter_mut().enumerate() {
                        v[i] = RMSPROP_DECAY * v[i] + (1.0 - RMSPROP_DECAY) * g[i] * g[i];
                        *w -= lr * g[i] / (v[i].sqrt() + RMSPROP_EPS);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_steps_match_hand_computation() {
        let mut p = Tensor::scalar(1.0);
        let mut opt = OptimizerState::new(Algorithm::Adam, &[(1, 1)], 0.1);
        opt.step(&mut [&mut p], &[Tensor::scalar(0.5)]);
        // m = 0.05, v = 0.00025; bias-corrected m̂ = 0.5, v̂ = 0.25.
        let expect1 = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((p.item() - expect1).abs() < 1e-12);
        opt.step(&mut [&mut p], &[Tensor::scalar(-1.0)]);
        let m = 0.9 * 0.05 - 0.1;
        let v = 0.999 * 0.00025 + 0.001 * 1.0;
        let m_hat = m / (1.0 - 0.81);
        let v_hat = v / (1.0 - 0.999f64 * 0.999);
        let expect2 = expect1 - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p.item() - expect2).abs() < 1e-12);
    }

    #[test]
    fn rmsprop_first_steps_match_hand_computation() {
        let mut p = Tensor::scalar(2.0);
        let mut opt = OptimizerState::new(Algorithm::RmsProp, &[(1, 1)], 0.01);
        opt.step(&mut [&mut p], &[Tensor::scalar(3.0)]);
        let v1 = 0.1 * 9.0;
        let e1 = 2.0 - 0.01 * 3.0 / (f64::sqrt(v1) + 1e-7);
        assert!((p.item() - e1).abs() < 1e-12);
        opt.step(&mut [&mut p], &[Tensor::scalar(-1.0)]);
        let v2 = 0.9 * v1 + 0.1;
        let e2 = e1 + 0.01 / (f64::sqrt(v2) + 1e-7);
        assert!((p.item() - e2).abs() < 1e-12);
        assert_eq!(opt.steps(), 2);
    }

    #[test]
    fn zero_lr_leaves_parameters_bitwise_unchanged() {
        for alg in [Algorithm::Adam, Algorithm::RmsProp] {
            let orig = Tensor::from_fn(3, 2, |r, c| (r as f64 - 1.3) * (c as f64 + 0.7));
            let mut p = orig.clone();
            let mut opt = OptimizerState::new(alg, &[(3, 2)], 0.0);
            for _ in 0..5 {
                opt.step(&mut [&mut p], &[Tensor::filled(3, 2, 0.37)]);
            }
            assert_eq!(p.data(), orig.data());
        }
    }
}
