//! NICE search distribution: additive coupling layers stacked on a Gaussian latent.
//!
//! Each layer keeps the coordinates selected by its mask and shifts the others
//! by an MLP of the kept ones, so the inverse is exact and the Jacobian
//! determinant is one. The density of `x` is therefore the latent density at
//! `flow.inverse(x)`, with no correction term.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::latent::LatentParams;
use crate::mlp::MlpParams;

/// One additive coupling layer: `v_pass = u_pass`, `v_shift = u_shift + t(u_pass)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CouplingRecord", into = "CouplingRecord")]
pub struct CouplingLayer {
    mask: Vec<bool>,
    net: MlpParams,
    pass: Vec<usize>,
    shift: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct CouplingRecord {
    mask: Vec<u8>,
    net: MlpParams,
}

impl From<CouplingLayer> for CouplingRecord {
    fn from(layer: CouplingLayer) -> Self {
        Self { mask: layer.mask.iter().map(|&m| m as u8).collect(), net: layer.net }
    }
}

impl TryFrom<CouplingRecord> for CouplingLayer {
    type Error = Error;

    fn try_from(r: CouplingRecord) -> Result<Self> {
        if r.mask.iter().any(|&m| m > 1) {
            return Err(Error::InvalidConfig("mask entries must be 0 or 1".into()));
        }
        let net = MlpParams::from_parts(r.net.layer_sizes().to_vec(), r.net.weights().to_vec(), r.net.biases().to_vec())?;
        CouplingLayer::new(r.mask.into_iter().map(|m| m == 1).collect(), net)
    }
}

impl CouplingLayer {
    /// `mask[i] == true` marks a pass-through coordinate. The network must map the
    /// pass-through coordinates to the shifted ones.
    pub fn new(mask: Vec<bool>, net: MlpParams) -> Result<Self> {
        let pass: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let shift: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
        if pass.is_empty() || shift.is_empty() {
            return Err(Error::InvalidConfig("coupling mask needs at least one 0 and one 1".into()));
        }
        check_len(pass.len(), net.input_dim())?;
        check_len(shift.len(), net.output_dim())?;
        Ok(Self { mask, net, pass, shift })
    }

    pub fn dim(&self) -> usize {
        self.mask.len()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn net(&self) -> &MlpParams {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut MlpParams {
        &mut self.net
    }

    fn shift_amount(&self, v: &[f64]) -> Vec<f64> {
        let input: Vec<f64> = self.pass.iter().map(|&i| v[i]).collect();
        let mut out = vec![0.0; self.shift.len()];
        self.net.forward_into(&input, &mut out);
        out
    }

    pub fn forward(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), u.len())?;
        let mut v = u.to_vec();
        self.forward_in_place(&mut v);
        Ok(v)
    }

    pub fn inverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), v.len())?;
        let mut u = v.to_vec();
        self.inverse_in_place(&mut u);
        Ok(u)
    }

    fn forward_in_place(&self, state: &mut [f64]) {
        let t = self.shift_amount(state);
        for (&i, ti) in self.shift.iter().zip(t) {
            state[i] += ti;
        }
    }

    fn inverse_in_place(&self, state: &mut [f64]) {
        let t = self.shift_amount(state);
        for (&i, ti) in self.shift.iter().zip(t) {
            state[i] -= ti;
        }
    }
}

/// Architecture of a freshly initialized flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub coupling_layers: usize,
    pub hidden_units: Vec<usize>,
    /// Multiplier on the final-layer weights of every coupling network at
    /// initialization. Zero makes the initial flow exactly the identity.
    pub output_scale: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { coupling_layers: 3, hidden_units: vec![16], output_scale: 0.0 }
    }
}

/// The bijection `g` as an ordered stack of coupling layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    dim: usize,
    layers: Vec<CouplingLayer>,
}

impl FlowParams {
    pub fn new(dim: usize, layers: Vec<CouplingLayer>) -> Result<Self> {
        for layer in &layers {
            check_len(dim, layer.dim())?;
        }
        Ok(Self { dim, layers })
    }

    /// Flow with no layers: `g` is the identity.
    pub fn identity(dim: usize) -> Self {
        Self { dim, layers: Vec::new() }
    }

    /// Layer `k` passes through the coordinates whose index has parity `k mod 2`,
    /// so consecutive masks are complementary.
    pub fn random<R: Rng + ?Sized>(dim: usize, cfg: &FlowConfig, rng: &mut R) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidConfig("coupling layers need dimension >= 2".into()));
        }
        let layers = (0..cfg.coupling_layers)
            .map(|k| {
                let mask: Vec<bool> = (0..dim).map(|i| i % 2 == k % 2).collect();
                let n_pass = mask.iter().filter(|&&m| m).count();
                let mut sizes = vec![n_pass];
                sizes.extend_from_slice(&cfg.hidden_units);
                sizes.push(dim - n_pass);
                CouplingLayer::new(mask, MlpParams::random(&sizes, cfg.output_scale, rng)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dim, layers })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> &[CouplingLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [CouplingLayer] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.net.num_params()).sum()
    }

    /// Concatenation of the layers' flat parameter vectors, in layer order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            layer.net.write_flat(&mut out);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_len(self.num_params(), flat.len())?;
        let mut offset = 0;
        for layer in &mut self.layers {
            let n = layer.net.num_params();
            layer.net.set_flat(&flat[offset..offset + n])?;
            offset += n;
        }
        Ok(())
    }

    /// `x = g(z)`: coupling layers applied in order.
    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, z.len())?;
        Ok(self.forward_unchecked(z))
    }

    pub(crate) fn forward_unchecked(&self, z: &[f64]) -> Vec<f64> {
        let mut state = z.to_vec();
        for layer in &self.layers {
            layer.forward_in_place(&mut state);
        }
        state
    }

    /// `z = h(x) = g⁻¹(x)`: inverse layers applied in reverse order.
    pub fn inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, x.len())?;
        Ok(self.inverse_unchecked(x))
    }

    pub(crate) fn inverse_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut state = x.to_vec();
        for layer in self.layers.iter().rev() {
            layer.inverse_in_place(&mut state);
        }
        state
    }

    /// Adds `scale(log π(x)) · ∇_η log π(x)` into `grad` (flat layout of
    /// [`to_flat`](Self::to_flat)) and returns `log π(x)`.
    pub(crate) fn accumulate_grad_log_density(
        &self,
        latent: &LatentParams,
        x: &[f64],
        scale: impl FnOnce(f64) -> f64,
        grad: &mut [f64],
    ) -> f64 {
        // inputs[k] is the state fed to the inverse of layer k
        let mut inputs = vec![Vec::new(); self.layers.len()];
        let mut state = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            inputs[k] = state.clone();
            layer.inverse_in_place(&mut state);
        }
        let (value, mut g) = latent.log_density_and_grad(&state);
        let scale = scale(value);
        if scale == 0.0 {
            return value;
        }
        for gi in g.iter_mut() {
            *gi *= scale;
        }

        let mut offset = 0;
        for (k, layer) in self.layers.iter().enumerate() {
            let n = layer.net.num_params();
            // u_shift = v_shift − t(v_pass): the network sees −g_shift as cotangent.
            let upstream: Vec<f64> = layer.shift.iter().map(|&i| -g[i]).collect();
            let pass_in: Vec<f64> = layer.pass.iter().map(|&i| inputs[k][i]).collect();
            let mut d_pass = vec![0.0; layer.pass.len()];
            layer.net.backward_accumulate(&pass_in, &upstream, &mut d_pass, &mut grad[offset..offset + n]);
            for (&i, d) in layer.pass.iter().zip(d_pass) {
                g[i] += d;
            }
            offset += n;
        }
        value
    }
}

/// `log π(x) = log ν(h(x))`.
pub fn log_density(latent: &LatentParams, flow: &FlowParams, x: &[f64]) -> Result<f64> {
    check_len(latent.dim(), flow.dim())?;
    let z = flow.inverse(x)?;
    Ok(latent.log_density_unchecked(&z))
}

/// Gradient of `log π(x)` with respect to every coupling-network parameter, in
/// the flat layout of [`FlowParams::to_flat`].
pub fn grad_log_density_eta(latent: &LatentParams, flow: &FlowParams, x: &[f64]) -> Result<Vec<f64>> {
    check_len(latent.dim(), flow.dim())?;
    check_len(flow.dim(), x.len())?;
    let mut grad = vec![0.0; flow.num_params()];
    flow.accumulate_grad_log_density(latent, x, |_| 1.0, &mut grad);
    Ok(grad)
}

/// Latent draws and their images under the flow, row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub z: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
}

/// Draws `n` latent points from `latent` and pushes each through the flow.
pub fn sample<R: Rng + ?Sized>(latent: &LatentParams, flow: &FlowParams, n: usize, rng: &mut R) -> Result<Samples> {
    check_len(latent.dim(), flow.dim())?;
    let z: Vec<Vec<f64>> = (0..n).map(|_| latent.sample_one(rng)).collect();
    let x = z.iter().map(|zi| flow.forward_unchecked(zi)).collect();
    Ok(Samples { z, x })
}

/// Latent and flow parameters saved together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub latent: LatentParams,
    pub flow: FlowParams,
}

impl Checkpoint {
    /// Pretty-printed JSON. Identical parameters always produce identical bytes.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(text)?;
        check_len(ckpt.latent.dim(), ckpt.flow.dim())?;
        for layer in &ckpt.flow.layers {
            check_len(ckpt.flow.dim, layer.dim())?;
        }
        Ok(ckpt)
    }
}
