//! Fixed-topology feedforward network with ReLU hidden layers and a linear
//! output layer, with hand-written backpropagation.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Parameters live in a single flat vector so optimizers, target copies and
/// checkpoints can treat every approximator alike. Layer `l` stores its weight
/// matrix row-major (`out x in`) followed by its bias vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    bias: bool,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Per-sample activations kept for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct MlpCache {
    // activations[0] is the input; the last entry is the network output.
    activations: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`, zero parameters.
    pub fn zeros(sizes: &[usize], bias: bool) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::ShapeMismatch(format!(
                "layer sizes {sizes:?} need an input and an output width"
            )));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for w in sizes.windows(2) {
            offsets.push(total);
            total += w[0] * w[1] + if bias { w[1] } else { 0 };
        }
        offsets.push(total);
        Ok(Self {
            sizes: sizes.to_vec(),
            bias,
            params: vec![0.0; total],
            offsets,
        })
    }

    /// He-uniform hidden weights, Glorot-uniform output weights, zero biases.
    pub fn new(sizes: &[usize], bias: bool, rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(sizes, bias)?;
        let layers = net.layer_count();
        for l in 0..layers {
            let (fan_in, fan_out) = (net.sizes[l], net.sizes[l + 1]);
            let limit = if l + 1 == layers {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            } else {
                (6.0 / fan_in as f64).sqrt()
            };
            let start = net.offsets[l];
            for w in &mut net.params[start..start + fan_in * fan_out] {
                *w = rng.gen_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], bias: bool, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes, bias)?;
        if params.len() != net.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for layout {sizes:?}, expected {}",
                params.len(),
                net.params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn has_bias(&self) -> bool {
        self.bias
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn weights(&self, l: usize) -> &[f64] {
        let start = self.offsets[l];
        &self.params[start..start + self.sizes[l] * self.sizes[l + 1]]
    }

    fn biases(&self, l: usize) -> Option<&[f64]> {
        if !self.bias {
            return None;
        }
        let start = self.offsets[l] + self.sizes[l] * self.sizes[l + 1];
        Some(&self.params[start..start + self.sizes[l + 1]])
    }

    fn check_width(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_width() {
            return Err(Error::WidthMismatch {
                expected: self.input_width(),
                got: input.len(),
            });
        }
        Ok(())
    }

    fn layer_forward(&self, l: usize, input: &[f64], out: &mut Vec<f64>) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = self.weights(l);
        let b = self.biases(l);
        let hidden = l + 1 < self.layer_count();
        out.clear();
        out.extend((0..n_out).map(|o| {
            let row = &w[o * n_in..(o + 1) * n_in];
            let mut z: f64 = row.iter().zip(input).map(|(a, x)| a * x).sum();
            if let Some(b) = b {
                z += b[o];
            }
            if hidden {
                z.max(0.0)
            } else {
                z
            }
        }));
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_width(input)?;
        let mut current = input.to_vec();
        let mut next = Vec::new();
        for l in 0..self.layer_count() {
            self.layer_forward(l, &current, &mut next);
            std::mem::swap(&mut current, &mut next);
        }
        Ok(current)
    }

    pub fn forward_cached(&self, input: &[f64], cache: &mut MlpCache) -> Result<()> {
        self.check_width(input)?;
        cache.activations.resize_with(self.sizes.len(), Vec::new);
        cache.activations[0].clear();
        cache.activations[0].extend_from_slice(input);
        for l in 0..self.layer_count() {
            let (before, after) = cache.activations.split_at_mut(l + 1);
            self.layer_forward(l, &before[l], &mut after[0]);
        }
        Ok(())
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d output`.
    pub fn backward(&self, cache: &MlpCache, output_grad: &[f64], grads: &mut [f64]) {
        debug_assert_eq!(grads.len(), self.params.len());
        debug_assert_eq!(output_grad.len(), self.output_width());
        let mut delta = output_grad.to_vec();
        for l in (0..self.layer_count()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &cache.activations[l];
            let w_start = self.offsets[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let g = &mut grads[w_start + o * n_in..w_start + (o + 1) * n_in];
                for (gi, xi) in g.iter_mut().zip(input) {
                    *gi += d * xi;
                }
            }
            if self.bias {
                let b_start = w_start + n_in * n_out;
                for (g, d) in grads[b_start..b_start + n_out].iter_mut().zip(&delta) {
                    *g += d;
                }
            }
            if l == 0 {
                break;
            }
            let w = self.weights(l);
            let mut prev = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += d * wi;
                }
            }
            // ReLU derivative, using the post-activation value.
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}
