use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NnError;

/// Fully connected network: tanh hidden layers, linear output. Parameters
/// live in one flat vector, layer by layer, weights (row-major `out × in`)
/// before biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Layer activations from a forward pass; `acts[0]` is the input.
#[derive(Debug, Clone)]
pub struct Tape {
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape has an input")
    }
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an mlp needs input and output sizes");
        let count = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Mlp { sizes: sizes.to_vec(), params: vec![0.0; count] }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Mlp::zeros(sizes);
        let mut off = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[off..off + fan_in * fan_out] {
                *p = rng.random_range(-bound..bound);
            }
            off += fan_in * fan_out + fan_out;
        }
        net
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
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

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut off = 0;
        self.sizes.windows(2).map(move |w| {
            let start = off;
            off += w[0] * w[1] + w[1];
            (start, w[0], w[1])
        })
    }

    /// Multiply the last layer's weights and biases by `scale`.
    pub fn scale_output_layer(&mut self, scale: f64) {
        let (start, fan_in, fan_out) = self.layers().last().unwrap();
        for p in &mut self.params[start..start + fan_in * fan_out + fan_out] {
            *p *= scale;
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward_tape(input)?.acts.pop().unwrap())
    }

    pub fn forward_tape(&self, input: &[f64]) -> Result<Tape, NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::Shape { expected: self.input_dim(), found: input.len() });
        }
        let last = self.sizes.len() - 2;
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.to_vec());
        for (l, (start, fan_in, fan_out)) in self.layers().enumerate() {
            let x = &acts[l];
            let w = &self.params[start..start + fan_in * fan_out];
            let b = &self.params[start + fan_in * fan_out..start + fan_in * fan_out + fan_out];
            let mut y = b.to_vec();
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                *yo += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            if l != last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(y);
        }
        Ok(Tape { acts })
    }

    /// Accumulate `∂L/∂params` into `grads` given `∂L/∂output`; returns `∂L/∂input`.
    pub fn backward_into(&self, tape: &Tape, grad_out: &[f64], grads: &mut [f64]) -> Result<Vec<f64>, NnError> {
        if grad_out.len() != self.output_dim() {
            return Err(NnError::Shape { expected: self.output_dim(), found: grad_out.len() });
        }
        if grads.len() != self.params.len() {
            return Err(NnError::Shape { expected: self.params.len(), found: grads.len() });
        }
        let layers: Vec<_> = self.layers().collect();
        let mut delta = grad_out.to_vec();
        for (l, &(start, fan_in, fan_out)) in layers.iter().enumerate().rev() {
            let x = &tape.acts[l];
            let w_end = start + fan_in * fan_out;
            for o in 0..fan_out {
                let d = delta[o];
                if d != 0.0 {
                    let g = &mut grads[start + o * fan_in..start + (o + 1) * fan_in];
                    for (gi, xi) in g.iter_mut().zip(x) {
                        *gi += d * xi;
                    }
                }
                grads[w_end + o] += d;
            }
            let w = &self.params[start..w_end];
            let mut prev = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                if d != 0.0 {
                    for (pi, wi) in prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                        *pi += d * wi;
                    }
                }
            }
            if l > 0 {
                for (pi, a) in prev.iter_mut().zip(x) {
                    *pi *= 1.0 - a * a;
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// Parameter gradient for a single output gradient.
    pub fn backward(&self, tape: &Tape, grad_out: &[f64]) -> Result<Vec<f64>, NnError> {
        let mut grads = vec![0.0; self.params.len()];
        self.backward_into(tape, grad_out, &mut grads)?;
        Ok(grads)
    }
}
