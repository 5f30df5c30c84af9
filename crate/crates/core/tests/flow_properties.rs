mod common;

use common::{central_diff, random_flow, random_latent, random_point, rel_err, rng};
use gnn_es::flow::{self, grad_log_density_eta};
use gnn_es::{FlowConfig, FlowParams, LatentParams};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn jacobian_of_inverse(flow: &FlowParams, x: &[f64]) -> DMatrix<f64> {
    let d = x.len();
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut hi = x.to_vec();
        let mut lo = x.to_vec();
        hi[j] += 1e-6;
        lo[j] -= 1e-6;
        let (fh, fl) = (flow.inverse(&hi).unwrap(), flow.inverse(&lo).unwrap());
        for i in 0..d {
            jac[(i, j)] = (fh[i] - fl[i]) / 2e-6;
        }
    }
    jac
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn forward_inverts_inverse(seed in any::<u64>(), dim in 2usize..7, layers in 1usize..5) {
        let mut r = rng(seed);
        let f = random_flow(dim, layers, &mut r);
        let x = random_point(dim, 3.0, &mut r);
        let back = f.forward(&f.inverse(&x).unwrap()).unwrap();
        let again = f.inverse(&f.forward(&x).unwrap()).unwrap();
        for i in 0..dim {
            prop_assert!((back[i] - x[i]).abs() < 1e-9);
            prop_assert!((again[i] - x[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn inverse_is_volume_preserving(seed in any::<u64>(), four in any::<bool>()) {
        let dim = if four { 4 } else { 2 };
        let mut r = rng(seed);
        let f = random_flow(dim, 3, &mut r);
        let x = random_point(dim, 2.0, &mut r);
        let det = jacobian_of_inverse(&f, &x).determinant();
        prop_assert!((det.abs() - 1.0).abs() < 1e-5, "det = {det}");
    }

    #[test]
    fn eta_gradient_matches_finite_differences(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = random_flow(2, 3, &mut r);
        let latent = random_latent(2, &mut r);
        let x = random_point(2, 2.0, &mut r);
        let grad = grad_log_density_eta(&latent, &f, &x).unwrap();
        let fd = central_diff(&f.to_flat(), |p| {
            let mut g = f.clone();
            g.set_flat(p).unwrap();
            flow::log_density(&latent, &g, &x).unwrap()
        });
        for (a, b) in grad.iter().zip(&fd) {
            prop_assert!(rel_err(*a, *b) < 1e-4, "{a} vs {b}");
        }
    }
}

#[test]
fn density_integrates_to_one() {
    // Trapezoid-free midpoint rule on [−8, 8]²; the Gaussian tails beyond are
    // far below the tolerance for these latent scales.
    for seed in 0..3 {
        let mut r = rng(seed);
        let f = random_flow(2, 3, &mut r);
        let latent = LatentParams::isotropic(&[0.3, -0.2], 0.8).unwrap();
        let (lo, hi, n) = (-8.0, 8.0, 800);
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = [lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h];
                total += flow::log_density(&latent, &f, &x).unwrap().exp();
            }
        }
        total *= h * h;
        assert!((total - 1.0).abs() < 1e-3, "seed {seed}: {total}");
    }
}

/// Shifts the output bias of layer `k` and returns the coordinates of the
/// flow output that moved.
fn moved_by_layer(base: &FlowParams, k: usize, z: &[f64]) -> Vec<bool> {
    let mut f = base.clone();
    let net = f.layers_mut()[k].net_mut();
    let mut p = net.to_flat();
    let len = p.len();
    for b in &mut p[len - net.output_dim()..] {
        *b += 0.5;
    }
    net.set_flat(&p).unwrap();
    let (x0, x1) = (base.forward(z).unwrap(), f.forward(z).unwrap());
    x0.iter().zip(&x1).map(|(a, b)| a != b).collect()
}

#[test]
fn single_layer_moves_only_its_shifted_coordinates() {
    for dim in 2..7 {
        let mut r = rng(dim as u64);
        let f = random_flow(dim, 1, &mut r);
        let z = random_point(dim, 1.0, &mut r);
        let moved = moved_by_layer(&f, 0, &z);
        let mask = f.layers()[0].mask();
        for i in 0..dim {
            assert_eq!(moved[i], !mask[i], "d={dim}, coordinate {i}");
        }
    }
}

#[test]
fn every_coordinate_is_transformed_by_some_layer() {
    for dim in 2..7 {
        let mut r = rng(dim as u64);
        let f = random_flow(dim, 2, &mut r);
        let z = random_point(dim, 1.0, &mut r);
        let mut touched = vec![false; dim];
        for k in 0..2 {
            for (t, m) in touched.iter_mut().zip(moved_by_layer(&f, k, &z)) {
                *t |= m;
            }
        }
        assert!(touched.iter().all(|&t| t), "d={dim}: {touched:?}");
    }
}

#[test]
fn sample_covariance_of_an_isotropic_latent() {
    let sigma = 0.7;
    let latent = LatentParams::isotropic(&[1.0, -2.0, 0.5], sigma).unwrap();
    let f = FlowParams::random(3, &FlowConfig::default(), &mut rng(4)).unwrap();
    let n = 100_000;
    let xs = flow::sample(&latent, &f, n, &mut rng(5)).unwrap().x;
    let mean: Vec<f64> = (0..3).map(|i| xs.iter().map(|x| x[i]).sum::<f64>() / n as f64).collect();
    for i in 0..3 {
        for j in 0..3 {
            let c = xs.iter().map(|x| (x[i] - mean[i]) * (x[j] - mean[j])).sum::<f64>() / (n - 1) as f64;
            let expected = if i == j { sigma * sigma } else { 0.0 };
            // standard error of a sample (co)variance is about σ²·√(2/n) on the diagonal
            let se = sigma * sigma * (2.0 / n as f64).sqrt();
            assert!((c - expected).abs() < 5.0 * se, "cov[{i}][{j}] = {c}");
        }
    }
}

#[test]
fn identity_flow_density_is_the_latent_density() {
    let mut r = rng(9);
    let latent = random_latent(4, &mut r);
    let x = random_point(4, 2.0, &mut r);
    let f = FlowParams::identity(4);
    assert_eq!(flow::log_density(&latent, &f, &x).unwrap(), latent.log_density(&x).unwrap());
}
