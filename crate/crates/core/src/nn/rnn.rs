use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NnError;

/// Elman cell with a sigmoid read-out:
/// `h' = tanh(Wx·x + Wh·h + b)`, `y = σ(Wo·h' + bo)`.
///
/// The read-out starts at zero so an untrained cell predicts exactly 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentCell {
    input: usize,
    hidden: usize,
    output: usize,
    params: Vec<f64>,
}

/// Forward record of a sequence, for backpropagation through time.
#[derive(Debug, Clone)]
pub struct SeqTape {
    inputs: Vec<Vec<f64>>,
    /// `hs[0]` is the initial state; `hs[t + 1]` follows input `t`.
    hs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl RecurrentCell {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let mut cell = RecurrentCell { input, hidden, output, params: vec![0.0; Self::count(input, hidden, output)] };
        let bx = (1.0 / input.max(1) as f64).sqrt();
        let bh = (1.0 / hidden as f64).sqrt();
        let (wx, wh, _, _, _) = cell.offsets();
        for p in &mut cell.params[wx..wx + hidden * input] {
            *p = rng.random_range(-bx..bx);
        }
        for p in &mut cell.params[wh..wh + hidden * hidden] {
            *p = rng.random_range(-bh..bh);
        }
        cell
    }

    fn count(input: usize, hidden: usize, output: usize) -> usize {
        hidden * input + hidden * hidden + hidden + output * hidden + output
    }

    fn offsets(&self) -> (usize, usize, usize, usize, usize) {
        let wx = 0;
        let wh = wx + self.hidden * self.input;
        let b = wh + self.hidden * self.hidden;
        let wo = b + self.hidden;
        let bo = wo + self.output * self.hidden;
        (wx, wh, b, wo, bo)
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn output_dim(&self) -> usize {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.hidden]
    }

    /// One step; returns the new hidden state and the output in (0, 1).
    pub fn step(&self, h: &[f64], x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        if x.len() != self.input {
            return Err(NnError::Shape { expected: self.input, found: x.len() });
        }
        if h.len() != self.hidden {
            return Err(NnError::Shape { expected: self.hidden, found: h.len() });
        }
        let (wx, wh, b, wo, bo) = self.offsets();
        let p = &self.params;
        let mut next = vec![0.0; self.hidden];
        for (i, hi) in next.iter_mut().enumerate() {
            let mut z = p[b + i];
            for (j, xj) in x.iter().enumerate() {
                z += p[wx + i * self.input + j] * xj;
            }
            for (j, hj) in h.iter().enumerate() {
                z += p[wh + i * self.hidden + j] * hj;
            }
            *hi = z.tanh();
        }
        let mut y = vec![0.0; self.output];
        for (k, yk) in y.iter_mut().enumerate() {
            let mut z = p[bo + k];
            for (i, hi) in next.iter().enumerate() {
                z += p[wo + k * self.hidden + i] * hi;
            }
            *yk = sigmoid(z);
        }
        Ok((next, y))
    }

    pub fn run(&self, inputs: &[Vec<f64>]) -> Result<SeqTape, NnError> {
        let mut hs = vec![self.initial_state()];
        let mut outputs = Vec::with_capacity(inputs.len());
        for x in inputs {
            let (h, y) = self.step(hs.last().unwrap(), x)?;
            hs.push(h);
            outputs.push(y);
        }
        Ok(SeqTape { inputs: inputs.to_vec(), hs, outputs })
    }

    /// Backpropagation through time. `grad_logits[t]` is `∂L/∂z_t` where
    /// `y_t = σ(z_t)`; returns `∂L/∂params`.
    pub fn backward(&self, tape: &SeqTape, grad_logits: &[Vec<f64>]) -> Result<Vec<f64>, NnError> {
        if grad_logits.len() != tape.outputs.len() {
            return Err(NnError::Shape { expected: tape.outputs.len(), found: grad_logits.len() });
        }
        let (wx, wh, b, wo, bo) = self.offsets();
        let p = &self.params;
        let mut g = vec![0.0; self.params.len()];
        let mut dh_next = vec![0.0; self.hidden];
        for t in (0..tape.outputs.len()).rev() {
            let h = &tape.hs[t + 1];
            let h_prev = &tape.hs[t];
            let x = &tape.inputs[t];
            let dz = &grad_logits[t];
            let mut dh = dh_next.clone();
            for k in 0..self.output {
                g[bo + k] += dz[k];
                for i in 0..self.hidden {
                    g[wo + k * self.hidden + i] += dz[k] * h[i];
                    dh[i] += dz[k] * p[wo + k * self.hidden + i];
                }
            }
            let da: Vec<f64> = dh.iter().zip(h).map(|(d, hv)| d * (1.0 - hv * hv)).collect();
            dh_next = vec![0.0; self.hidden];
            for i in 0..self.hidden {
                g[b + i] += da[i];
                for j in 0..self.input {
                    g[wx + i * self.input + j] += da[i] * x[j];
                }
                for j in 0..self.hidden {
                    g[wh + i * self.hidden + j] += da[i] * h_prev[j];
                    dh_next[j] += da[i] * p[wh + i * self.hidden + j];
                }
            }
        }
        Ok(g)
    }
}
