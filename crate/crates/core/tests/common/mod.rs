#![allow(dead_code)]

use gnn_es::{FlowConfig, FlowParams, LatentParams};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Relative difference with an absolute floor of 1e-4 in the denominator.
/// Central differences with step 1e-6 carry rounding noise near 1e-9, which
/// would dominate the ratio for entries that are themselves nearly zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Central difference of `f` along every coordinate of `params`.
pub fn central_diff(params: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + FD_STEP;
            let hi = f(&p);
            p[i] = orig - FD_STEP;
            let lo = f(&p);
            p[i] = orig;
            (hi - lo) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Flow whose coupling networks have O(1) output weights, so it is far from
/// the identity.
pub fn random_flow(dim: usize, layers: usize, rng: &mut ChaCha8Rng) -> FlowParams {
    let cfg = FlowConfig { coupling_layers: layers, hidden_units: vec![16], output_scale: 1.0 };
    FlowParams::random(dim, &cfg, rng).unwrap()
}

/// Latent Gaussian with a random mean and a well-conditioned random factor.
pub fn random_latent(dim: usize, rng: &mut ChaCha8Rng) -> LatentParams {
    let mean = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
    let factor = DMatrix::from_fn(dim, dim, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Greater => rng.gen_range(-0.3..0.3),
        std::cmp::Ordering::Equal => rng.gen_range(0.5..1.5),
        std::cmp::Ordering::Less => 0.0,
    });
    LatentParams::new(mean, factor).unwrap()
}

pub fn random_point(dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-scale..scale)).collect()
}
