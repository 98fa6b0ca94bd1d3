use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => x.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Tanh => x.iter_mut().for_each(|v| *v = v.tanh()),
        }
    }

    /// Multiplies `grad` in place by the activation derivative, expressed
    /// through the activation's output `y`.
    pub fn backprop(self, y: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => grad.iter_mut().zip(y).for_each(|(g, &y)| {
                if y <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Tanh => grad
                .iter_mut()
                .zip(y)
                .for_each(|(g, &y)| *g *= 1.0 - y * y),
        }
    }
}

/// Weight initialization schemes.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// U(-sqrt(6/fan_in), sqrt(6/fan_in)).
    HeUniform,
    /// He-uniform scaled by a constant factor.
    ScaledHeUniform(f64),
    Zeros,
}

pub(crate) fn init_weights<R: Rng>(shape: &[usize], fan_in: usize, init: Init, rng: &mut R) -> Tensor {
    let scale = match init {
        Init::HeUniform => 1.0,
        Init::ScaledHeUniform(s) => s,
        Init::Zeros => return Tensor::zeros(shape),
    };
    let bound = (6.0 / fan_in as f64).sqrt() * scale;
    Tensor::from_fn(shape, |_| rng.gen_range(-bound..=bound))
}

/// Fully connected layer, `y = W x + b` with `W` stored `[out, in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, init: Init, rng: &mut R) -> Self {
        Self {
            weight: init_weights(&[outputs, inputs], inputs, init, rng),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Batched forward; `x` holds `rows` input vectors back to back.
    pub fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let (n_in, n_out) = (self.inputs(), self.outputs());
        let w = self.weight.data();
        let b = self.bias.data();
        let mut y = vec![0.0; rows * n_out];
        for r in 0..rows {
            let xr = &x[r * n_in..(r + 1) * n_in];
            let yr = &mut y[r * n_out..(r + 1) * n_out];
            for (o, out) in yr.iter_mut().enumerate() {
                let wo = &w[o * n_in..(o + 1) * n_in];
                *out = b[o] + wo.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        y
    }

    /// Accumulates parameter gradients into `gw`/`gb` and optionally returns
    /// the gradient with respect to the input.
    pub fn backward(
        &self,
        x: &[f64],
        dy: &[f64],
        rows: usize,
        gw: &mut Tensor,
        gb: &mut Tensor,
        want_dx: bool,
    ) -> Option<Vec<f64>> {
        let (n_in, n_out) = (self.inputs(), self.outputs());
        let w = self.weight.data();
        let gw = gw.data_mut();
        let gb = gb.data_mut();
        let mut dx = want_dx.then(|| vec![0.0; rows * n_in]);
        for r in 0..rows {
            let xr = &x[r * n_in..(r + 1) * n_in];
            let dyr = &dy[r * n_out..(r + 1) * n_out];
            for (o, &g) in dyr.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                let gwo = &mut gw[o * n_in..(o + 1) * n_in];
                gwo.iter_mut().zip(xr).for_each(|(a, &xv)| *a += g * xv);
                if let Some(dx) = dx.as_mut() {
                    let dxr = &mut dx[r * n_in..(r + 1) * n_in];
                    let wo = &w[o * n_in..(o + 1) * n_in];
                    dxr.iter_mut().zip(wo).for_each(|(d, &wv)| *d += g * wv);
                }
            }
        }
        dx
    }
}

/// Multi-layer perceptron: hidden layers share one activation, the output
/// layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub hidden_activation: Activation,
}

/// Per-layer inputs recorded by [`Mlp::forward_cached`]; the last entry is
/// the network output.
#[derive(Debug, Clone)]
pub struct MlpCache {
    rows: usize,
    activations: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache always holds the input")
    }
}

impl Mlp {
    /// Builds `sizes[0] -> sizes[1] -> ... -> sizes[n]`; the output layer
    /// uses `output_init`.
    pub fn new<R: Rng>(sizes: &[usize], hidden_activation: Activation, output_init: Init, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let init = if i == last { output_init } else { Init::HeUniform };
                Dense::new(w[0], w[1], init, rng)
            })
            .collect();
        Self {
            layers,
            hidden_activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h, rows);
            if i != last {
                self.hidden_activation.apply(&mut h);
            }
        }
        h
    }

    pub fn forward_cached(&self, x: &[f64], rows: usize) -> MlpCache {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut h = layer.forward(activations.last().unwrap(), rows);
            if i != last {
                self.hidden_activation.apply(&mut h);
            }
            activations.push(h);
        }
        MlpCache { rows, activations }
    }

    /// Backpropagates `d_out` (gradient w.r.t. the output) and returns
    /// parameter gradients in [`Mlp::params`] order.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64]) -> Vec<Tensor> {
        self.backward_full(cache, d_out, false).0
    }

    /// Like [`Mlp::backward`], also returning the gradient w.r.t. the input
    /// when `want_dx` is set.
    pub fn backward_full(&self, cache: &MlpCache, d_out: &[f64], want_dx: bool) -> (Vec<Tensor>, Option<Vec<f64>>) {
        let mut grads: Vec<Tensor> = self
            .params()
            .iter()
            .map(|p| Tensor::zeros(p.shape()))
            .collect();
        let mut delta = d_out.to_vec();
        let mut dx = None;
        let last = self.layers.len() - 1;
        for i in (0..self.layers.len()).rev() {
            if i != last {
                self.hidden_activation
                    .backprop(&cache.activations[i + 1], &mut delta);
            }
            let (gw, rest) = grads[2 * i..].split_at_mut(1);
            let d = self.layers[i].backward(
                &cache.activations[i],
                &delta,
                cache.rows,
                &mut gw[0],
                &mut rest[0],
                i > 0 || want_dx,
            );
            match d {
                Some(d) if i > 0 => delta = d,
                d => dx = d,
            }
        }
        (grads, dx)
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }
}
