//! Diagonal Gaussian policy `N(mu_theta(s), diag(sigma^2))` with a
//! state-independent trainable `log sigma`, and the scalar value networks
//! used as baselines for reward and cost.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::nn::{Activation, Init, Mlp};
use crate::tensor::Tensor;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Range of the effective `log sigma`; keeps `sigma` positive and finite.
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

fn effective(ls: f64) -> f64 {
    ls.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    /// `[d_a]`.
    pub log_std: Tensor,
}

impl GaussianPolicy {
    /// `hidden` tanh layers; the mean head starts near zero (He-uniform scaled
    /// by 0.01).
    pub fn new<R: Rng>(state_dim: usize, action_dim: usize, hidden: &[usize], init_log_std: f64, rng: &mut R) -> Self {
        let mut sizes = vec![state_dim];
        sizes.extend(hidden);
        sizes.push(action_dim);
        Self {
            mean: Mlp::new(&sizes, Activation::Tanh, Init::ScaledHeUniform(0.01), rng),
            log_std: Tensor::filled(&[action_dim], init_log_std),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.mean.inputs()
    }

    pub fn action_dim(&self) -> usize {
        self.mean.outputs()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.data().iter().map(|&l| effective(l).exp()).collect()
    }

    pub fn mean_action(&self, state: &[f64]) -> Vec<f64> {
        self.mean.forward(state, 1)
    }

    /// Draws a raw (unsquashed) action and returns it with its log-density.
    pub fn sample_action<R: Rng>(&self, state: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
        let mu = self.mean_action(state);
        let action: Vec<f64> = mu
            .iter()
            .zip(self.std())
            .map(|(m, s)| {
                let z: f64 = StandardNormal.sample(rng);
                m + s * z
            })
            .collect();
        let lp = self.density(&mu, &action);
        (action, lp)
    }

    fn density(&self, mu: &[f64], action: &[f64]) -> f64 {
        mu.iter()
            .zip(action)
            .zip(self.log_std.data())
            .map(|((m, a), &ls)| {
                let ls = effective(ls);
                let z = (a - m) / ls.exp();
                -0.5 * z * z - ls - 0.5 * LN_2PI
            })
            .sum()
    }

    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> f64 {
        self.density(&self.mean_action(state), action)
    }

    /// Log-densities of `rows` state/action pairs laid out back to back.
    pub fn log_prob_batch(&self, states: &[f64], actions: &[f64], rows: usize) -> Vec<f64> {
        let mu = self.mean.forward(states, rows);
        let d = self.action_dim();
        (0..rows)
            .map(|r| self.density(&mu[r * d..(r + 1) * d], &actions[r * d..(r + 1) * d]))
            .collect()
    }

    /// Log-densities and the gradient of `sum_i weights[i] * log pi(a_i | s_i)`
    /// in [`GaussianPolicy::params`] order. The weights are supplied by the
    /// caller after seeing the log-densities.
    pub fn log_prob_grad(
        &self,
        states: &[f64],
        actions: &[f64],
        rows: usize,
        weights: impl FnOnce(&[f64]) -> Vec<f64>,
    ) -> (Vec<f64>, Vec<Tensor>) {
        let cache = self.mean.forward_cached(states, rows);
        let mu = cache.output();
        let d = self.action_dim();
        let logps: Vec<f64> = (0..rows)
            .map(|r| self.density(&mu[r * d..(r + 1) * d], &actions[r * d..(r + 1) * d]))
            .collect();
        let w = weights(&logps);
        let mut d_mu = vec![0.0; rows * d];
        let mut d_log_std = Tensor::zeros(&[d]);
        for r in 0..rows {
            if w[r] == 0.0 {
                continue;
            }
            for j in 0..d {
                let ls = self.log_std.data()[j];
                let var = (2.0 * effective(ls)).exp();
                let diff = actions[r * d + j] - mu[r * d + j];
                d_mu[r * d + j] = w[r] * diff / var;
                if (LOG_STD_MIN..=LOG_STD_MAX).contains(&ls) {
                    d_log_std.data_mut()[j] += w[r] * (diff * diff / var - 1.0);
                }
            }
        }
        let mut grads = self.mean.backward(&cache, &d_mu);
        grads.push(d_log_std);
        (logps, grads)
    }

    /// Differential entropy of the action distribution.
    pub fn entropy(&self) -> f64 {
        self.log_std.data().iter().map(|&ls| effective(ls) + 0.5 * (1.0 + LN_2PI)).sum()
    }

    /// Clamps the stored `log sigma` into `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub fn project(&mut self) {
        self.log_std.data_mut().iter_mut().for_each(|l| *l = effective(*l));
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.mean.params();
        p.push(&self.log_std);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.mean.params_mut();
        p.push(&mut self.log_std);
        p
    }
}

/// State-value baseline `V: R^{d_s} -> R` with its TD discount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueNet {
    pub net: Mlp,
    pub discount: f64,
}

impl ValueNet {
    /// Tanh trunk with a zero-initialized output layer, so predictions start at 0.
    pub fn new<R: Rng>(state_dim: usize, hidden: &[usize], discount: f64, rng: &mut R) -> Self {
        let mut sizes = vec![state_dim];
        sizes.extend(hidden);
        sizes.push(1);
        Self {
            net: Mlp::new(&sizes, Activation::Tanh, Init::Zeros, rng),
            discount,
        }
    }

    pub fn predict(&self, state: &[f64]) -> f64 {
        self.net.forward(state, 1)[0]
    }

    pub fn predict_batch(&self, states: &[f64], rows: usize) -> Vec<f64> {
        self.net.forward(states, rows)
    }

    /// Gradient of `sum_i coef[i] * V(s_i)`.
    pub fn weighted_grad(&self, states: &[f64], rows: usize, coef: &[f64]) -> Vec<Tensor> {
        let cache = self.net.forward_cached(states, rows);
        self.net.backward(&cache, coef)
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.net.params_mut()
    }
}
