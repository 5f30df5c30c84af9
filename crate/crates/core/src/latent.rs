//! Full-covariance Gaussian latent distribution, parametrized by its mean and a
//! lower-triangular factor `A` of the covariance `A Aᵀ`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatentRecord", into = "LatentRecord")]
pub struct LatentParams {
    mean: DVector<f64>,
    cov_factor: DMatrix<f64>,
}

impl LatentParams {
    /// Validates that `cov_factor` is square, finite, lower-triangular with a
    /// strictly positive diagonal.
    pub fn new(mean: DVector<f64>, cov_factor: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        check_len(d, cov_factor.nrows())?;
        check_len(d, cov_factor.ncols())?;
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("latent mean must be finite".into()));
        }
        if cov_factor.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        for i in 0..d {
            if cov_factor[(i, i)] <= 0.0 {
                return Err(Error::NotPositiveDefinite);
            }
            for j in i + 1..d {
                if cov_factor[(i, j)] != 0.0 {
                    return Err(Error::InvalidConfig("covariance factor must be lower-triangular".into()));
                }
            }
        }
        Ok(Self { mean, cov_factor })
    }

    /// `N(mean, scale² I)`.
    pub fn isotropic(mean: &[f64], scale: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(DVector::from_column_slice(mean), DMatrix::identity(d, d) * scale)
    }

    pub fn standard(d: usize) -> Self {
        Self::isotropic(&vec![0.0; d], 1.0).expect("identity factor is valid")
    }

    /// Factors a symmetric positive-definite covariance by Cholesky decomposition.
    pub fn from_covariance(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_len(mean.len(), cov.nrows())?;
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        let chol = Cholesky::new(cov).ok_or(Error::NotPositiveDefinite)?;
        Self::new(mean, chol.l())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov_factor(&self) -> &DMatrix<f64> {
        &self.cov_factor
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.cov_factor * self.cov_factor.transpose()
    }

    /// `log |det A|`, i.e. half the log-determinant of the covariance.
    pub fn log_det_factor(&self) -> f64 {
        self.cov_factor.diagonal().iter().map(|v| v.ln()).sum()
    }

    /// Differential entropy `0.5 log det(2πe Σ)`.
    pub fn entropy(&self) -> f64 {
        0.5 * self.dim() as f64 * (2.0 * PI * std::f64::consts::E).ln() + self.log_det_factor()
    }

    /// `A⁻¹ (z − mean)` by forward substitution. No shape checks.
    pub(crate) fn standardize(&self, z: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let a = &self.cov_factor;
        let mut s = vec![0.0; d];
        for i in 0..d {
            let mut acc = z[i] - self.mean[i];
            for j in 0..i {
                acc -= a[(i, j)] * s[j];
            }
            s[i] = acc / a[(i, i)];
        }
        s
    }

    /// `A⁻ᵀ s` by back substitution.
    fn solve_transpose(&self, s: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let a = &self.cov_factor;
        let mut out = vec![0.0; d];
        for i in (0..d).rev() {
            let mut acc = s[i];
            for j in i + 1..d {
                acc -= a[(j, i)] * out[j];
            }
            out[i] = acc / a[(i, i)];
        }
        out
    }

    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        check_len(self.dim(), z.len())?;
        Ok(self.log_density_unchecked(z))
    }

    pub(crate) fn log_density_unchecked(&self, z: &[f64]) -> f64 {
        let s = self.standardize(z);
        self.log_density_standardized(&s)
    }

    fn log_density_standardized(&self, s: &[f64]) -> f64 {
        let sq: f64 = s.iter().map(|v| v * v).sum();
        -0.5 * self.dim() as f64 * (2.0 * PI).ln() - self.log_det_factor() - 0.5 * sq
    }

    /// Log-density at `z` together with its gradient `−Σ⁻¹ (z − mean)`.
    pub(crate) fn log_density_and_grad(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let s = self.standardize(z);
        let value = self.log_density_standardized(&s);
        let mut grad = self.solve_transpose(&s);
        for g in grad.iter_mut() {
            *g = -*g;
        }
        (value, grad)
    }

    /// Draws `mean + A ε` with `ε ~ N(0, I)`; consumes exactly `dim` normals.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let eps: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        self.transform(&eps)
    }

    /// `mean + A ε`.
    pub(crate) fn transform(&self, eps: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let a = &self.cov_factor;
        (0..d)
            .map(|i| self.mean[i] + (0..=i).map(|j| a[(i, j)] * eps[j]).sum::<f64>())
            .collect()
    }
}

/// Serialized form: a mean vector and the factor as a list of rows.
#[derive(Serialize, Deserialize)]
struct LatentRecord {
    mean: Vec<f64>,
    cov_factor: Vec<Vec<f64>>,
}

impl From<LatentParams> for LatentRecord {
    fn from(p: LatentParams) -> Self {
        let d = p.dim();
        Self {
            mean: p.mean.iter().copied().collect(),
            cov_factor: (0..d).map(|i| (0..d).map(|j| p.cov_factor[(i, j)]).collect()).collect(),
        }
    }
}

impl TryFrom<LatentRecord> for LatentParams {
    type Error = Error;

    fn try_from(r: LatentRecord) -> Result<Self> {
        let d = r.mean.len();
        if r.cov_factor.iter().any(|row| row.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: r.cov_factor.len() });
        }
        check_len(d, r.cov_factor.len())?;
        let factor = DMatrix::from_fn(d, d, |i, j| r.cov_factor[i][j]);
        Self::new(DVector::from_vec(r.mean), factor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn example() -> LatentParams {
        let a = DMatrix::from_row_slice(3, 3, &[1.5, 0.0, 0.0, -0.3, 0.7, 0.0, 0.2, 0.4, 1.1]);
        LatentParams::new(DVector::from_vec(vec![0.5, -1.0, 2.0]), a).unwrap()
    }

    #[test]
    fn standard_normal_at_origin() {
        let p = LatentParams::standard(2);
        let v = p.log_density(&[0.0, 0.0]).unwrap();
        assert!((v + (2.0 * PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn log_density_matches_dense_formula() {
        let p = example();
        let z = [0.1, 0.3, -0.2];
        let cov = p.covariance();
        let inv = cov.clone().try_inverse().unwrap();
        let diff = DVector::from_column_slice(&z) - p.mean();
        let quad = (diff.transpose() * &inv * &diff)[(0, 0)];
        let expected = -0.5 * (3.0 * (2.0 * PI).ln() + cov.determinant().ln() + quad);
        assert!((p.log_density(&z).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = example();
        let z = [0.1, 0.3, -0.2];
        let (_, grad) = p.log_density_and_grad(&z);
        for i in 0..3 {
            let mut hi = z;
            let mut lo = z;
            hi[i] += 1e-6;
            lo[i] -= 1e-6;
            let fd = (p.log_density(&hi).unwrap() - p.log_density(&lo).unwrap()) / 2e-6;
            assert!((fd - grad[i]).abs() < 1e-7, "{i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn standardize_inverts_transform() {
        let p = example();
        let eps = [0.3, -1.2, 0.8];
        let s = p.standardize(&p.transform(&eps));
        for (a, b) in s.iter().zip(eps) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_invalid_factors() {
        let m = DVector::zeros(2);
        assert!(matches!(
            LatentParams::new(m.clone(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])),
            Err(Error::NotPositiveDefinite)
        ));
        assert!(LatentParams::new(m.clone(), DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).is_err());
        assert!(LatentParams::from_covariance(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
    }

    #[test]
    fn entropy_of_standard_normal() {
        let p = LatentParams::standard(4);
        let expected = 2.0 * (2.0 * PI * std::f64::consts::E).ln();
        assert!((p.entropy() - expected).abs() < 1e-14);
    }

    #[test]
    fn sampling_is_reproducible() {
        let p = example();
        let a = p.sample_one(&mut ChaCha8Rng::seed_from_u64(1));
        let b = p.sample_one(&mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
    }

    #[test]
    fn serde_round_trip() {
        let p = example();
        let text = serde_json::to_string(&p).unwrap();
        let back: LatentParams = serde_json::from_str(&text).unwrap();
        assert_eq!(p, back);
    }
}
