//! Minimal fully connected networks with reverse-mode differentiation.

use serde::{Deserialize, Serialize};

use crate::numerics::{axpy, Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Identity => 1.0,
        }
    }
}

/// `activation(W·x + b)` with `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    /// Uniform `[-1/√fan_in, 1/√fan_in]` weights, zero bias.
    pub fn init(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.uniform_range(-bound, bound))
            .collect();
        Self {
            weights: Matrix::new(fan_out, fan_in, data).expect("sized"),
            bias: vec![0.0; fan_out],
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.weights.matvec(x);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o = self.activation.apply(*o + b);
        }
        out
    }
}

/// Gradients for every parameter, laid out like the network.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub weights: Vec<Matrix>,
    pub bias: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.fan_out(), l.fan_in()))
                .collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.fan_out()]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Dense>,
}

impl Network {
    /// Tanh on every layer except, optionally, a linear last layer.
    pub fn init(dims: &[usize], linear_output: bool, rng: &mut Rng) -> Self {
        let last = dims.len().saturating_sub(2);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let act = if linear_output && k == last {
                    Activation::Identity
                } else {
                    Activation::Tanh
                };
                Dense::init(w[0], w[1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn in_dim(&self) -> Option<usize> {
        self.layers.first().map(Dense::fan_in)
    }

    pub fn out_dim(&self) -> Option<usize> {
        self.layers.last().map(Dense::fan_out)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.layers.iter().fold(x.to_vec(), |a, l| l.forward(&a))
    }

    /// Activations `[x, a₁, …, a_L]`.
    pub fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for l in &self.layers {
            let next = l.forward(acts.last().expect("non-empty"));
            acts.push(next);
        }
        acts
    }

    /// Back-propagates `cotangent` (w.r.t. the output) to the input,
    /// accumulating parameter gradients when `grads` is given.
    pub fn backward(&self, acts: &[Vec<f64>], cotangent: &[f64], mut grads: Option<&mut ParamGrads>) -> Vec<f64> {
        let mut cot = cotangent.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let out = &acts[k + 1];
            let input = &acts[k];
            let delta: Vec<f64> = cot
                .iter()
                .zip(out)
                .map(|(c, o)| c * layer.activation.derivative_from_output(*o))
                .collect();
            if let Some(g) = grads.as_deref_mut() {
                for (i, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        axpy(d, input, g.weights[k].row_mut(i));
                    }
                }
                axpy(1.0, &delta, &mut g.bias[k]);
            }
            cot = layer.weights.tr_matvec(&delta);
        }
        cot
    }

    /// Vector–Jacobian product at `x`.
    pub fn vjp(&self, x: &[f64], cotangent: &[f64]) -> Vec<f64> {
        let acts = self.trace(x);
        self.backward(&acts, cotangent, None)
    }

    pub fn apply_gradient(&mut self, grads: &ParamGrads, lr: f64) {
        for (k, layer) in self.layers.iter_mut().enumerate() {
            axpy(-lr, grads.weights[k].data(), layer.weights.data_mut());
            axpy(-lr, &grads.bias[k], &mut layer.bias);
        }
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.data().iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{dot, finite_diff_grad};

    #[test]
    fn vjp_matches_finite_differences() {
        let mut rng = Rng::new(4);
        let net = Network::init(&[4, 5, 3], true, &mut rng);
        let x = [0.3, -0.7, 1.1, 0.2];
        let c = [1.0, -2.0, 0.5];
        let analytic = net.vjp(&x, &c);
        let fd = finite_diff_grad(|v| dot(&net.forward(v), &c), &x, 1e-5).unwrap();
        for (a, b) in analytic.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let mut rng = Rng::new(8);
        let net = Network::init(&[3, 4, 2], true, &mut rng);
        let x = [0.5, -0.1, 0.9];
        let c = [0.7, -1.3];
        let mut g = ParamGrads::zeros_like(&net);
        let acts = net.trace(&x);
        net.backward(&acts, &c, Some(&mut g));
        let h = 1e-6;
        for k in 0..net.layers.len() {
            for idx in 0..net.layers[k].weights.data().len() {
                let mut p = net.clone();
                p.layers[k].weights.data_mut()[idx] += h;
                let up = dot(&p.forward(&x), &c);
                p.layers[k].weights.data_mut()[idx] -= 2.0 * h;
                let dn = dot(&p.forward(&x), &c);
                let fd = (up - dn) / (2.0 * h);
                assert!((fd - g.weights[k].data()[idx]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = Network::init(&[3, 2, 3], true, &mut Rng::new(1));
        let b = Network::init(&[3, 2, 3], true, &mut Rng::new(1));
        assert_eq!(a, b);
        assert_eq!(a.layers[0].activation, Activation::Tanh);
        assert_eq!(a.layers[1].activation, Activation::Identity);
    }
}
