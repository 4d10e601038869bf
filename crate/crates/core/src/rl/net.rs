//! Policy/value MLP with hand-written backpropagation, and Adam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

/// Shared tanh trunk with a softmax policy head and a scalar value head.
///
/// Parameters live in one flat vector: for each hidden layer its weights
/// (`out × in`, row-major) then biases, followed by the policy head and the
/// value head in the same form.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValueNet {
    input_dim: usize,
    hidden: Vec<usize>,
    n_actions: usize,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    inp: usize,
    out: usize,
    offset: usize,
}

impl Dense {
    fn weights<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.offset..self.offset + self.inp * self.out]
    }

    fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        let s = self.offset + self.inp * self.out;
        &p[s..s + self.out]
    }

    fn size(&self) -> usize {
        self.out * (self.inp + 1)
    }

    fn apply(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let w = self.weights(p);
        self.bias(p)
            .iter()
            .enumerate()
            .map(|(o, b)| b + w[o * self.inp..(o + 1) * self.inp].iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }

    /// Accumulate parameter gradients for upstream `dy` and return `dx`.
    fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let w = self.weights(p);
        let mut dx = vec![0.0; self.inp];
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = self.offset + o * self.inp;
            for i in 0..self.inp {
                grad[row + i] += g * x[i];
                dx[i] += g * w[o * self.inp + i];
            }
            grad[self.offset + self.inp * self.out + o] += g;
        }
        dx
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Input followed by every hidden activation.
    activations: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub value: f64,
}

impl PolicyValueNet {
    /// Uniform init in ±1/√fan_in for weights and biases.
    pub fn new(input_dim: usize, hidden: &[usize], n_actions: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || n_actions == 0 || hidden.contains(&0) {
            return Err(invalid("network dimensions must be positive"));
        }
        let mut net = Self {
            input_dim,
            hidden: hidden.to_vec(),
            n_actions,
            params: Vec::new(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in net.layers() {
            let bound = 1.0 / (layer.inp as f64).sqrt();
            net.params
                .extend((0..layer.size()).map(|_| rng.random_range(-bound..=bound)));
        }
        Ok(net)
    }

    pub fn from_params(input_dim: usize, hidden: &[usize], n_actions: usize, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::new(input_dim, hidden, n_actions, 0)?;
        if params.len() != net.params.len() {
            return Err(invalid(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite parameter".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Hidden layers, then the policy head, then the value head.
    fn layers(&self) -> Vec<Dense> {
        let mut out = Vec::with_capacity(self.hidden.len() + 2);
        let mut offset = 0;
        let mut inp = self.input_dim;
        for &h in &self.hidden {
            out.push(Dense { inp, out: h, offset });
            offset += out.last().unwrap().size();
            inp = h;
        }
        for width in [self.n_actions, 1] {
            out.push(Dense { inp, out: width, offset });
            offset += out.last().unwrap().size();
        }
        out
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardPass> {
        if input.len() != self.input_dim {
            return Err(invalid(format!(
                "input has {} entries, net expects {}",
                input.len(),
                self.input_dim
            )));
        }
        let layers = self.layers();
        let (trunk, heads) = layers.split_at(self.hidden.len());
        let mut activations = vec![input.to_vec()];
        for l in trunk {
            let z = l.apply(&self.params, activations.last().unwrap());
            activations.push(z.into_iter().map(f64::tanh).collect());
        }
        let h = activations.last().unwrap();
        let logits = heads[0].apply(&self.params, h);
        let value = heads[1].apply(&self.params, h)[0];
        if logits.iter().any(|v| !v.is_finite()) || !value.is_finite() {
            return Err(Error::Numerical("non-finite network output".into()));
        }
        Ok(ForwardPass {
            activations,
            logits,
            value,
        })
    }

    /// Add the gradient of a scalar loss, given its derivatives with respect
    /// to the logits and the value, into `grad`.
    pub fn backward(&self, pass: &ForwardPass, dlogits: &[f64], dvalue: f64, grad: &mut [f64]) {
        let layers = self.layers();
        let (trunk, heads) = layers.split_at(self.hidden.len());
        let h = pass.activations.last().unwrap();
        let mut dh = heads[0].backward(&self.params, h, dlogits, grad);
        let dv = heads[1].backward(&self.params, h, &[dvalue], grad);
        dh.iter_mut().zip(dv).for_each(|(a, b)| *a += b);
        for (k, l) in trunk.iter().enumerate().rev() {
            let y = &pass.activations[k + 1];
            let dz: Vec<f64> = dh.iter().zip(y).map(|(g, a)| g * (1.0 - a * a)).collect();
            dh = l.backward(&self.params, &pass.activations[k], &dz, grad);
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - lse).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    /// One descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}
