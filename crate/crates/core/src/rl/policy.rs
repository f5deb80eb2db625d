//! Gaussian policy whose mean is a tanh multilayer perceptron.
//!
//! Parameters live in one flat vector, layer by layer: weights (row-major,
//! `out × in`) followed by biases. Gradients are accumulated by hand.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::barrier::{ActionVec, StateVec};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    sizes: Vec<usize>,
    params: Vec<f64>,
    sigma: f64,
}

/// Activations kept from a forward pass.
struct Trace {
    /// `layers[0]` is the input; later entries are post-activation outputs.
    layers: Vec<Vec<f64>>,
}

impl GaussianPolicy {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], sigma: f64, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::config("policy needs at least an input and an output layer, all non-empty"));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::config(format!("policy sigma must be > 0, got {sigma}")));
        }
        let mut params = Vec::with_capacity(Self::count(sizes));
        for pair in sizes.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            params.extend((0..n_in * n_out).map(|_| dist.sample(rng)));
            params.extend(std::iter::repeat_n(0.0, n_out));
        }
        Ok(Self { sizes: sizes.to_vec(), params, sigma })
    }

    pub fn from_params(sizes: &[usize], sigma: f64, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) || !(sigma > 0.0) {
            return Err(Error::config("invalid policy shape or sigma"));
        }
        if params.len() != Self::count(sizes) {
            return Err(Error::config(format!(
                "policy of shape {sizes:?} needs {} parameters, got {}",
                Self::count(sizes),
                params.len()
            )));
        }
        Ok(Self { sizes: sizes.to_vec(), params, sigma })
    }

    fn count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn action_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn forward(&self, s: &StateVec) -> Trace {
        let n_layers = self.sizes.len() - 1;
        let mut layers = Vec::with_capacity(n_layers + 1);
        layers.push(s.as_slice().to_vec());
        let mut off = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let input = &layers[l];
            let out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let z = b[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                    if l + 1 < n_layers {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            layers.push(out);
        }
        Trace { layers }
    }

    pub fn mean(&self, s: &StateVec) -> ActionVec {
        DVector::from_vec(self.forward(s).layers.pop().unwrap())
    }

    fn log_density(&self, mean: &[f64], a: &ActionVec) -> f64 {
        let var = self.sigma * self.sigma;
        let norm = (self.sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
        mean.iter().zip(a.iter()).map(|(m, x)| -(x - m) * (x - m) / (2.0 * var) - norm).sum()
    }

    /// `ln π(a | s)`.
    pub fn log_prob(&self, s: &StateVec, a: &ActionVec) -> f64 {
        self.log_density(self.mean(s).as_slice(), a)
    }

    /// `∇_w ln π(a | s)` by reverse accumulation.
    pub fn grad_log_prob(&self, s: &StateVec, a: &ActionVec) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        self.accumulate_grad_log_prob(s, a, 1.0, &mut grad);
        grad
    }

    /// `out += scale · ∇_w ln π(a | s)`.
    pub fn accumulate_grad_log_prob(&self, s: &StateVec, a: &ActionVec, scale: f64, out: &mut [f64]) {
        let trace = self.forward(s);
        self.backprop(&trace, a, scale, out);
    }

    fn backprop(&self, trace: &Trace, a: &ActionVec, scale: f64, out: &mut [f64]) {
        let n_layers = self.sizes.len() - 1;
        let var = self.sigma * self.sigma;
        // dℓ/dz at the output layer
        let mut delta: Vec<f64> = trace.layers[n_layers]
            .iter()
            .zip(a.iter())
            .map(|(m, x)| scale * (x - m) / var)
            .collect();
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &trace.layers[l];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    let row = &mut out[off + o * n_in..off + (o + 1) * n_in];
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
                out[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                let mut next = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d != 0.0 {
                        for (nx, wv) in next.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                            *nx += d * wv;
                        }
                    }
                }
                // tanh' = 1 − y²
                for (nx, y) in next.iter_mut().zip(input) {
                    *nx *= 1.0 - y * y;
                }
                delta = next;
            }
        }
    }

    /// `a = mean(s) + σ z` for a supplied standard-normal draw `z`.
    pub fn action_with_noise(&self, s: &StateVec, z: &DVector<f64>) -> ActionVec {
        self.mean(s) + z * self.sigma
    }

    /// Samples `a ~ π(·|s)` and adds `∇_w ln π(a|s)` into `score`.
    /// Returns the action and its log-density.
    pub fn sample_into<R: Rng + ?Sized>(&self, s: &StateVec, rng: &mut R, score: &mut [f64]) -> (ActionVec, f64) {
        let trace = self.forward(s);
        let mean = trace.layers.last().unwrap();
        let a = DVector::from_fn(mean.len(), |i, _| {
            let z: f64 = StandardNormal.sample(rng);
            mean[i] + self.sigma * z
        });
        let logp = self.log_density(mean, &a);
        self.backprop(&trace, &a, 1.0, score);
        (a, logp)
    }
}

/// Draws `a ~ π(·|s)` and returns it with `∇_w ln π(a|s)`.
pub fn sample_action<R: Rng + ?Sized>(policy: &GaussianPolicy, s: &StateVec, rng: &mut R) -> (ActionVec, Vec<f64>) {
    let mut g = vec![0.0; policy.num_params()];
    let (a, _) = policy.sample_into(s, rng, &mut g);
    (a, g)
}
