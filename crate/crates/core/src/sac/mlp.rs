//! Minimal dense network with tanh hidden layers, a linear head, and
//! hand-written backpropagation over one flat parameter vector. The flat
//! layout keeps the optimizer, target-network blending, finite-difference
//! checks, and checkpointing trivial.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected network: `dims = [in, h1, ..., out]`, tanh on every
/// hidden layer, identity on the output layer.
///
/// Layer `l` weights are row-major `out x in` at `offsets[l]`, followed by
/// the `out` biases.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer input activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// `activations[l]` is the input of layer `l`; the last entry is the
    /// network output (pre-activation of the linear head).
    pub activations: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(dims: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("Mlp: need at least input and output dims".into()));
        }
        let mut params = Vec::with_capacity(Self::param_count(dims));
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let scale = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_out * fan_in {
                params.push(rng.gen_range(-scale..scale));
            }
            for _ in 0..fan_out {
                params.push(rng.gen_range(-scale..scale));
            }
        }
        Ok(Self { dims: dims.to_vec(), params })
    }

    fn param_count(dims: &[usize]) -> usize {
        (0..dims.len() - 1).map(|l| dims[l + 1] * (dims[l] + 1)).sum()
    }

    fn layer_offset(&self, l: usize) -> usize {
        (0..l).map(|k| self.dims[k + 1] * (self.dims[k] + 1)).sum()
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::Shape("set_params: length mismatch".into()));
        }
        self.params.copy_from_slice(values);
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        debug_assert_eq!(x.len(), self.dims[0]);
        let n_layers = self.n_layers();
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(x.to_vec());
        let mut cur = x.to_vec();
        for l in 0..n_layers {
            let (ni, no) = (self.dims[l], self.dims[l + 1]);
            let off = self.layer_offset(l);
            let mut next = vec![0.0; no];
            for o in 0..no {
                let row = &self.params[off + o * ni..off + (o + 1) * ni];
                let mut z = self.params[off + no * ni + o];
                for (i, &xi) in cur.iter().enumerate() {
                    z += row[i] * xi;
                }
                next[o] = if l + 1 < n_layers { z.tanh() } else { z };
            }
            activations.push(next.clone());
            cur = next;
        }
        (cur, MlpCache { activations })
    }

    /// Backpropagation from `grad_out` (d loss / d output). Accumulates
    /// parameter gradients into `grads` (flat, same layout as `params`) and
    /// returns the gradient w.r.t. the network input.
    pub fn backward(&self, cache: &MlpCache, grad_out: &[f64], grads: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grads.len(), self.params.len());
        let n_layers = self.n_layers();
        let mut delta = grad_out.to_vec();
        for l in (0..n_layers).rev() {
            let (ni, no) = (self.dims[l], self.dims[l + 1]);
            let off = self.layer_offset(l);
            let input = &cache.activations[l];
            // Hidden layers carry tanh: fold its derivative into delta using
            // the stored post-activation value.
            if l + 1 < n_layers {
                let post = &cache.activations[l + 1];
                for o in 0..no {
                    delta[o] *= 1.0 - post[o] * post[o];
                }
            }
            let mut prev_delta = vec![0.0; ni];
            for o in 0..no {
                let row_off = off + o * ni;
                for i in 0..ni {
                    grads[row_off + i] += delta[o] * input[i];
                    prev_delta[i] += delta[o] * self.params[row_off + i];
                }
                grads[off + no * ni + o] += delta[o];
            }
            delta = prev_delta;
        }
        delta
    }
}

/// Gradient-descent flavor applied to one flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain stochastic gradient descent.
    Sgd,
    /// First/second-moment adaptive steps (beta1 0.9, beta2 0.999, eps 1e-8).
    Adam,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        Self { kind, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grads.len());
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                const BETA1: f64 = 0.9;
                const BETA2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                self.t += 1;
                let bc1 = 1.0 - BETA1.powi(self.t as i32);
                let bc2 = 1.0 - BETA2.powi(self.t as i32);
                for i in 0..params.len() {
                    self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * grads[i];
                    self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * grads[i] * grads[i];
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
                }
            }
        }
    }
}
