use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Adam optimizer state for an ordered list of parameter tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    /// One bias-corrected Adam step, `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn update(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed under the optimizer");
        assert_eq!(grads.len(), self.m.len(), "gradient count does not match parameters");
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            debug_assert_eq!(p.shape(), g.shape());
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *pi -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Tensor::new(vec![2], vec![1.0, -1.0]).unwrap();
        let mut adam = Adam::new([&p]);
        let g = Tensor::new(vec![2], vec![0.5, -3.0]).unwrap();
        adam.update(&mut [&mut p], &[g], 0.1);
        // bias-corrected first step is lr * sign(g)
        assert!((p.data()[0] - 0.9).abs() < 1e-6);
        assert!((p.data()[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_leaves_fresh_parameters_untouched() {
        let mut p = Tensor::new(vec![3], vec![0.0, 2.0, 0.0]).unwrap();
        let mut adam = Adam::new([&p]);
        for _ in 0..5 {
            adam.update(&mut [&mut p], &[Tensor::zeros(&[3])], 0.1);
        }
        assert_eq!(p.data(), &[0.0, 2.0, 0.0]);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = Tensor::new(vec![1], vec![5.0]).unwrap();
        let mut adam = Adam::new([&p]);
        for _ in 0..2000 {
            let g = Tensor::new(vec![1], vec![2.0 * (p.data()[0] - 1.5)]).unwrap();
            adam.update(&mut [&mut p], &[g], 0.05);
        }
        assert!((p.data()[0] - 1.5).abs() < 1e-2);
    }
}
