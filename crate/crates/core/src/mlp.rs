//! Dense feed-forward network with `tanh` hidden units and an affine output layer.
//!
//! Gradients are computed by hand-written reverse-mode accumulation. The
//! parameter set can also be viewed as one flat vector (per layer: the
//! row-major weight matrix followed by the bias vector), which is the layout
//! used by [`MlpParams::backward_accumulate`] and the flow optimizer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Weights and biases of a multi-layer perceptron.
///
/// Layer `k` maps `layer_sizes[k]` inputs to `layer_sizes[k + 1]` outputs; its
/// weight matrix is stored row-major with shape `layer_sizes[k + 1] x layer_sizes[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Gradients of a scalar `upstream · output` with respect to the input and the
/// parameters. `d_params` has exactly the shape of the network it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub d_input: Vec<f64>,
    pub d_params: MlpParams,
}

impl MlpParams {
    /// All-zero network. The zero network maps every input to the zero vector.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let weights = layer_sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(Self { layer_sizes: layer_sizes.to_vec(), weights, biases })
    }

    /// Random initialization: weights uniform in `[-s, s]` with `s = 1/sqrt(fan_in)`,
    /// zero biases, and the final layer's weights multiplied by `output_scale`.
    pub fn random<R: Rng + ?Sized>(layer_sizes: &[usize], output_scale: f64, rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(layer_sizes)?;
        let last = params.weights.len() - 1;
        for (k, w) in params.weights.iter_mut().enumerate() {
            let s = 1.0 / (layer_sizes[k] as f64).sqrt();
            let scale = if k == last { output_scale } else { 1.0 };
            for v in w.iter_mut() {
                *v = rng.gen_range(-s..=s) * scale;
            }
        }
        Ok(params)
    }

    /// Builds a network from explicit parts, checking that the shapes chain and
    /// that every entry is finite.
    pub fn from_parts(layer_sizes: Vec<usize>, weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        validate_sizes(&layer_sizes)?;
        let layers = layer_sizes.len() - 1;
        check_len(layers, weights.len())?;
        check_len(layers, biases.len())?;
        for (k, pair) in layer_sizes.windows(2).enumerate() {
            check_len(pair[0] * pair[1], weights[k].len())?;
            check_len(pair[1], biases[k].len())?;
        }
        let params = Self { layer_sizes, weights, biases };
        if params.weights.iter().chain(&params.biases).flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("network parameters must be finite".into()));
        }
        Ok(params)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// Length of the flat parameter vector.
    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.write_flat(&mut out);
        out
    }

    pub(crate) fn write_flat(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
    }

    /// Overwrites the parameters from a flat vector of length [`num_params`](Self::num_params).
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_len(self.num_params(), flat.len())?;
        let mut offset = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            b.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_dim(), input.len())?;
        let mut out = vec![0.0; self.output_dim()];
        self.forward_into(input, &mut out);
        Ok(out)
    }

    /// Forward pass without shape checks; `out` must have length `output_dim`.
    pub(crate) fn forward_into(&self, input: &[f64], out: &mut [f64]) {
        let mut current = input.to_vec();
        let last = self.num_layers() - 1;
        for k in 0..=last {
            let n_in = self.layer_sizes[k];
            let w = &self.weights[k];
            let b = &self.biases[k];
            if k == last {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = affine_row(&w[j * n_in..(j + 1) * n_in], &current, b[j]);
                }
            } else {
                current = (0..self.layer_sizes[k + 1])
                    .map(|j| affine_row(&w[j * n_in..(j + 1) * n_in], &current, b[j]).tanh())
                    .collect();
            }
        }
    }

    /// Reverse-mode gradients of `upstream · forward(input)`.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<GradientBundle> {
        check_len(self.input_dim(), input.len())?;
        check_len(self.output_dim(), upstream.len())?;
        let mut d_input = vec![0.0; self.input_dim()];
        let mut flat = vec![0.0; self.num_params()];
        self.backward_accumulate(input, upstream, &mut d_input, &mut flat);
        let mut d_params = self.clone();
        d_params.set_flat(&flat)?;
        Ok(GradientBundle { d_input, d_params })
    }

    /// Adds the gradients of `upstream · forward(input)` into `d_input` and into
    /// the flat parameter gradient `d_params`. No shape checks.
    pub(crate) fn backward_accumulate(&self, input: &[f64], upstream: &[f64], d_input: &mut [f64], d_params: &mut [f64]) {
        let layers = self.num_layers();
        // activations[k] is the input of layer k
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(layers);
        activations.push(input.to_vec());
        for k in 0..layers - 1 {
            let n_in = self.layer_sizes[k];
            let w = &self.weights[k];
            let b = &self.biases[k];
            let a = &activations[k];
            let next = (0..self.layer_sizes[k + 1])
                .map(|j| affine_row(&w[j * n_in..(j + 1) * n_in], a, b[j]).tanh())
                .collect();
            activations.push(next);
        }

        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for k in 0..layers {
            offsets.push(offset);
            offset += self.weights[k].len() + self.biases[k].len();
        }

        let mut delta = upstream.to_vec();
        for k in (0..layers).rev() {
            let n_in = self.layer_sizes[k];
            let n_out = self.layer_sizes[k + 1];
            let a = &activations[k];
            let w = &self.weights[k];
            let base = offsets[k];
            let (dw, db) = d_params[base..base + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let mut grad_a = vec![0.0; n_in];
            for j in 0..n_out {
                let dj = delta[j];
                if dj == 0.0 {
                    continue;
                }
                db[j] += dj;
                let row = j * n_in;
                for i in 0..n_in {
                    dw[row + i] += dj * a[i];
                    grad_a[i] += dj * w[row + i];
                }
            }
            if k == 0 {
                for (d, g) in d_input.iter_mut().zip(&grad_a) {
                    *d += g;
                }
            } else {
                for (g, ai) in grad_a.iter_mut().zip(a) {
                    *g *= 1.0 - ai * ai;
                }
                delta = grad_a;
            }
        }
    }
}

#[inline]
fn affine_row(row: &[f64], x: &[f64], bias: f64) -> f64 {
    row.iter().zip(x).fold(bias, |acc, (w, v)| acc + w * v)
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::InvalidConfig(format!(
            "layer sizes must list at least an input and an output size, all positive (got {layer_sizes:?})"
        )));
    }
    Ok(())
}
