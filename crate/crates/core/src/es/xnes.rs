use nalgebra::{DMatrix, DVector};

use super::{make_utilities, EvaluatedLatentPopulation, LatentOptimizer};
use crate::error::{Error, Result};
use crate::latent::LatentParams;

/// Learning rates of the mean and of the covariance factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XnesRates {
    pub mean: f64,
    pub cov: f64,
}

impl XnesRates {
    /// `mean = 1`, `cov = (9 + 3 ln d) / (5 d √d)`.
    pub fn default_for(dim: usize) -> Self {
        let d = dim as f64;
        Self { mean: 1.0, cov: (9.0 + 3.0 * d.ln()) / (5.0 * d * d.sqrt()) }
    }
}

/// Exponential natural evolution strategy on the latent Gaussian.
#[derive(Clone, Debug)]
pub struct Xnes {
    pub rates: XnesRates,
}

impl Xnes {
    pub fn new(dim: usize) -> Self {
        Self { rates: XnesRates::default_for(dim) }
    }
}

impl LatentOptimizer for Xnes {
    fn update(&mut self, latent: &LatentParams, pop: &EvaluatedLatentPopulation) -> Result<LatentParams> {
        xnes_update(latent, pop, self.rates)
    }
}

/// Natural-gradient step in the exponential parametrization:
///
/// ```text
/// s_i = A⁻¹ (z_i − m)
/// G_δ = Σ u_i s_i,   G_M = Σ u_i (s_i s_iᵀ − I)
/// m  ← m + η_m A G_δ
/// A  ← A expm(η_A G_M / 2)
/// ```
///
/// The new factor is brought back to lower-triangular form with a QR
/// decomposition, which leaves `A Aᵀ` unchanged.
pub fn xnes_update(latent: &LatentParams, pop: &EvaluatedLatentPopulation, rates: XnesRates) -> Result<LatentParams> {
    pop.check_dim(latent)?;
    if pop.len() < 2 {
        return Err(Error::InvalidConfig("xNES needs at least two samples".into()));
    }
    let utilities = make_utilities(pop.f());
    step_with_utilities(latent, pop.z(), utilities.as_slice(), rates)
}

fn step_with_utilities(latent: &LatentParams, z: &[Vec<f64>], utilities: &[f64], rates: XnesRates) -> Result<LatentParams> {
    if rates.mean == 0.0 && rates.cov == 0.0 {
        return Ok(latent.clone());
    }
    let d = latent.dim();

    let mut grad_mean = DVector::<f64>::zeros(d);
    let mut grad_cov = DMatrix::<f64>::zeros(d, d);
    let mut utility_sum = 0.0;
    for (z, &u) in z.iter().zip(utilities) {
        let s = DVector::from_vec(latent.standardize(z));
        grad_mean.axpy(u, &s, 1.0);
        grad_cov.ger(u, &s, &s, 1.0);
        utility_sum += u;
    }
    for i in 0..d {
        grad_cov[(i, i)] -= utility_sum;
    }

    let a = latent.cov_factor();
    let mean = latent.mean() + a * grad_mean * rates.mean;
    let exponent = grad_cov * (0.5 * rates.cov);
    // ‖E‖ bounds log ‖expm(E)‖; past ln(f64::MAX) the factor overflows, and
    // nalgebra's expm does not return on non-finite input.
    let norm = exponent.norm();
    if !(norm <= f64::MAX.ln()) {
        return Err(Error::Divergence(format!("covariance update has norm {norm:e}")));
    }
    let factor = a * exponent.exp();
    let factor = lower_triangular_factor(factor)?;
    LatentParams::new(mean, factor).map_err(|e| Error::Divergence(e.to_string()))
}

/// Lower-triangular `L` with positive diagonal and `L Lᵀ = B Bᵀ`.
pub(crate) fn lower_triangular_factor(b: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence("covariance factor is not finite".into()));
    }
    // Bᵀ = Q R  ⇒  B Bᵀ = Rᵀ R
    let mut l = b.transpose().qr().r().transpose();
    let d = l.nrows();
    for j in 0..d {
        if l[(j, j)] < 0.0 {
            for i in j..d {
                l[(i, j)] = -l[(i, j)];
            }
        }
        if !(l[(j, j)] > 0.0) {
            return Err(Error::Divergence("covariance factor became singular".into()));
        }
        for i in 0..j {
            l[(i, j)] = 0.0;
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn population(latent: &LatentParams, n: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> EvaluatedLatentPopulation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<Vec<f64>> = (0..n).map(|_| latent.sample_one(&mut rng)).collect();
        let fit = z.iter().map(|zi| f(zi)).collect();
        EvaluatedLatentPopulation::new(z, fit).unwrap()
    }

    fn sphere(z: &[f64]) -> f64 {
        z.iter().map(|v| v * v).sum()
    }

    #[test]
    fn collapsed_latent_reports_divergence() {
        // a factor near the rounding level of the mean makes s huge
        let latent = LatentParams::isotropic(&[1.0, 1.0], 1e-300).unwrap();
        let z = vec![vec![1.0, 1.0], vec![1.0 + 1e-10, 1.0], vec![1.0, 1.0 - 1e-10], vec![1.0 - 1e-10, 1.0]];
        let pop = EvaluatedLatentPopulation::new(z.clone(), z.iter().map(|zi| sphere(zi)).collect()).unwrap();
        assert!(matches!(xnes_update(&latent, &pop, XnesRates::default_for(2)), Err(Error::Divergence(_))));
    }

    #[test]
    fn default_rates() {
        let r = XnesRates::default_for(2);
        assert_eq!(r.mean, 1.0);
        assert!((r.cov - (9.0 + 3.0 * 2f64.ln()) / (10.0 * 2f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn equal_utilities_on_antithetic_pairs_keep_the_mean() {
        let latent = LatentParams::standard(2);
        let z = vec![vec![0.8, -0.3], vec![-0.8, 0.3], vec![1.7, 0.2], vec![-1.7, -0.2]];
        let next = step_with_utilities(&latent, &z, &[0.25; 4], XnesRates::default_for(2)).unwrap();
        assert_eq!(next.mean().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn zero_rates_are_identity() {
        let latent = LatentParams::isotropic(&[1.0, 1.0], 1.0).unwrap();
        let pop = population(&latent, 20, 1, sphere);
        let next = xnes_update(&latent, &pop, XnesRates { mean: 0.0, cov: 0.0 }).unwrap();
        assert_eq!(next, latent);
    }

    #[test]
    fn invariant_under_monotone_transform() {
        let latent = LatentParams::isotropic(&[1.0, -2.0, 0.5], 0.7).unwrap();
        let pop = population(&latent, 30, 2, sphere);
        let transformed = EvaluatedLatentPopulation::new(
            pop.z().to_vec(),
            pop.f().iter().map(|f| (3.0 * f + 1.0).exp()).collect(),
        )
        .unwrap();
        let rates = XnesRates::default_for(3);
        assert_eq!(xnes_update(&latent, &pop, rates).unwrap(), xnes_update(&latent, &transformed, rates).unwrap());
    }

    #[test]
    fn factor_stays_lower_triangular() {
        let mut latent = LatentParams::isotropic(&[3.0, -1.0, 2.0, 0.5], 1.0).unwrap();
        let rates = XnesRates::default_for(4);
        for gen in 0..50 {
            let pop = population(&latent, 40, gen, |z| z[0] * z[0] + 100.0 * (z[1] - z[2]).powi(2) + z[3].abs());
            latent = xnes_update(&latent, &pop, rates).unwrap();
            let a = latent.cov_factor();
            for i in 0..4 {
                assert!(a[(i, i)] > 0.0 && a[(i, i)].is_finite());
                for j in i + 1..4 {
                    assert_eq!(a[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn refactoring_preserves_covariance() {
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.2, 0.3, 2.0, 0.1, -0.5, 0.7, 0.9]);
        let l = lower_triangular_factor(b.clone()).unwrap();
        let diff = &l * l.transpose() - &b * b.transpose();
        assert!(diff.amax() < 1e-12);
    }

    #[test]
    fn sphere_converges() {
        let mut latent = LatentParams::isotropic(&[1.0, 1.0], 1.0).unwrap();
        let mut best = f64::INFINITY;
        let rates = XnesRates::default_for(2);
        for gen in 0..200 {
            let pop = population(&latent, 20, 100 + gen, sphere);
            best = pop.f().iter().copied().fold(best, f64::min);
            latent = xnes_update(&latent, &pop, rates).unwrap();
        }
        assert!(best < 1e-8, "best {best}");
    }

    #[test]
    fn rejects_tiny_populations() {
        let latent = LatentParams::standard(2);
        let pop = EvaluatedLatentPopulation::new(vec![vec![0.0, 0.0]], vec![1.0]).unwrap();
        assert!(xnes_update(&latent, &pop, XnesRates::default_for(2)).is_err());
    }
}
