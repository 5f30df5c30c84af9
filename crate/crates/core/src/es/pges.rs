use nalgebra::{DMatrix, DVector};

use super::{EvaluatedLatentPopulation, LatentOptimizer};
use crate::error::{Error, Result};
use crate::latent::LatentParams;

/// Plain gradient ES: stochastic gradient descent on `E[f]` with the
/// score-function estimator and a mean-fitness baseline.
#[derive(Clone, Debug)]
pub struct Pges {
    pub learning_rate: f64,
}

impl LatentOptimizer for Pges {
    fn update(&mut self, latent: &LatentParams, pop: &EvaluatedLatentPopulation) -> Result<LatentParams> {
        pges_update(latent, pop, self.learning_rate)
    }
}

/// One descent step with
/// `∇_m ≈ 1/n Σ (F_i − F̄) A⁻ᵀ s_i` and `∇_A ≈ 1/n Σ (F_i − F̄) tril(A⁻ᵀ (s_i s_iᵀ − I))`,
/// where `s_i = A⁻¹ (z_i − m)`. Infinite fitness is clamped to the largest finite value.
pub fn pges_update(latent: &LatentParams, pop: &EvaluatedLatentPopulation, lr: f64) -> Result<LatentParams> {
    pop.check_dim(latent)?;
    let n = pop.len();
    if n < 2 {
        return Err(Error::InvalidConfig("PGES needs at least two samples".into()));
    }
    if lr == 0.0 {
        return Ok(latent.clone());
    }
    let worst_finite = pop.f().iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !worst_finite.is_finite() {
        return Err(Error::Divergence("no finite fitness in population".into()));
    }
    let fitness: Vec<f64> = pop.f().iter().map(|&v| if v.is_finite() { v } else { worst_finite }).collect();
    let baseline = fitness.iter().sum::<f64>() / n as f64;

    let d = latent.dim();
    let a = latent.cov_factor();
    let a_inv_t = a
        .clone()
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite)?
        .transpose();
    let mut grad_mean = DVector::<f64>::zeros(d);
    let mut grad_factor = DMatrix::<f64>::zeros(d, d);
    for (z, &f) in pop.z().iter().zip(&fitness) {
        let w = (f - baseline) / n as f64;
        let s = DVector::from_vec(latent.standardize(z));
        grad_mean.axpy(w, &(&a_inv_t * &s), 1.0);
        let outer = &s * s.transpose() - DMatrix::identity(d, d);
        grad_factor += (&a_inv_t * outer) * w;
    }

    let mean = latent.mean() - grad_mean * lr;
    let factor = (a - grad_factor * lr).lower_triangle();
    LatentParams::new(mean, factor).map_err(|e| Error::Divergence(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed_population(f: impl Fn(&[f64]) -> f64) -> EvaluatedLatentPopulation {
        let z = vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![1.5, 0.0], vec![-0.5, 0.0]];
        let fit = z.iter().map(|zi| f(zi)).collect();
        EvaluatedLatentPopulation::new(z, fit).unwrap()
    }

    #[test]
    fn hand_computed_step_on_a_quadratic() {
        // mean (0.5, 0), A = I, f = z₁²:
        // F = 1, 0, 2.25, 0.25; F̄ = 0.875; s₁ = 0.5, −0.5, 1, −1
        // ∇m₁ = (0.0625 + 0.4375 + 1.375 + 0.625)/4 = 0.625
        // ∇A₁₁ = (0.125·(−0.75) + (−0.875)·(−0.75))/4 = 0.140625, ∇A₂₂ = ∇A₂₁ = 0
        let latent = LatentParams::isotropic(&[0.5, 0.0], 1.0).unwrap();
        let pop = fixed_population(|z| z[0] * z[0]);
        let next = pges_update(&latent, &pop, 0.1).unwrap();
        assert!((next.mean()[0] - 0.4375).abs() < 1e-15);
        assert_eq!(next.mean()[1], 0.0);
        let a = next.cov_factor();
        assert!((a[(0, 0)] - 0.9859375).abs() < 1e-15);
        assert!((a[(1, 1)] - 1.0).abs() < 1e-15);
        assert_eq!(a[(1, 0)], 0.0);
        assert!(next.mean()[0] < latent.mean()[0]);
    }

    #[test]
    fn constant_fitness_leaves_mean_unchanged() {
        let latent = LatentParams::isotropic(&[0.5, 0.0], 1.0).unwrap();
        let pop = fixed_population(|_| 3.0);
        let next = pges_update(&latent, &pop, 0.5).unwrap();
        assert_eq!(next.mean(), latent.mean());
        assert_eq!(next.cov_factor(), latent.cov_factor());
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let latent = LatentParams::isotropic(&[0.5, 0.0], 1.0).unwrap();
        let pop = fixed_population(|z| z[0].sin());
        assert_eq!(pges_update(&latent, &pop, 0.0).unwrap(), latent);
    }

    #[test]
    fn too_large_step_reports_divergence() {
        let latent = LatentParams::isotropic(&[0.5, 0.0], 1.0).unwrap();
        let pop = fixed_population(|z| z[0] * z[0]);
        assert!(matches!(pges_update(&latent, &pop, 100.0), Err(Error::Divergence(_))));
    }
}
