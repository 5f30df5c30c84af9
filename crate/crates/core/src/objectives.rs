//! Synthetic test landscapes with random translation and rotation.
//!
//! Rosenbrock and Griewank use their standard textbook forms. The bent cigar
//! follows the BBOB composition `cigar(R · T_asy(R · y))`.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectiveKind {
    Sphere,
    Rosenbrock,
    Cigar,
    BentCigar,
    Rastrigin,
    Griewank,
    Beale,
    Styblinski,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 8] = [
        Self::Sphere,
        Self::Rosenbrock,
        Self::Cigar,
        Self::BentCigar,
        Self::Rastrigin,
        Self::Griewank,
        Self::Beale,
        Self::Styblinski,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sphere => "sphere",
            Self::Rosenbrock => "rosenbrock",
            Self::Cigar => "cigar",
            Self::BentCigar => "bent_cigar",
            Self::Rastrigin => "rastrigin",
            Self::Griewank => "griewank",
            Self::Beale => "beale",
            Self::Styblinski => "styblinski",
        }
    }

    /// Value of the untranslated landscape at `y`.
    fn value(self, y: &[f64], rotation: Option<&DMatrix<f64>>, beta: f64) -> f64 {
        match self {
            Self::Sphere => sphere(y),
            Self::Rosenbrock => rosenbrock(y),
            Self::Cigar => cigar(y),
            Self::BentCigar => match rotation {
                Some(r) => bent_cigar(y, r, beta),
                None => cigar(&t_asy(y, beta)),
            },
            Self::Rastrigin => rastrigin(y),
            Self::Griewank => griewank(y),
            Self::Beale => beale(y),
            Self::Styblinski => styblinski(y),
        }
    }

    /// Global minimizer and minimum of the untranslated landscape.
    pub fn optimum(self, dim: usize) -> (Vec<f64>, f64) {
        match self {
            Self::Rosenbrock => (vec![1.0; dim], 0.0),
            Self::Beale => {
                let mut x = vec![0.0; dim];
                x[0] = 3.0;
                if dim > 1 {
                    x[1] = 0.5;
                }
                (x, 0.0)
            }
            Self::Styblinski => {
                let x = styblinski_minimizer();
                let x_opt = vec![x; dim];
                let value = styblinski(&x_opt);
                (x_opt, value)
            }
            _ => (vec![0.0; dim], 0.0),
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::UnknownObjective(s.to_string()))
    }
}

/// A landscape instance: `f(x) = landscape(x − translation)`, with an
/// evaluation counter shared by all callers.
#[derive(Debug)]
pub struct ObjectiveSpec {
    kind: ObjectiveKind,
    dim: usize,
    translation: Vec<f64>,
    rotation: Option<DMatrix<f64>>,
    beta: f64,
    evaluations: AtomicU64,
}

impl Clone for ObjectiveSpec {
    fn clone(&self) -> Self {
        Self {
            kind: self.kind,
            dim: self.dim,
            translation: self.translation.clone(),
            rotation: self.rotation.clone(),
            beta: self.beta,
            evaluations: AtomicU64::new(self.evaluations()),
        }
    }
}

/// Asymmetry coefficient of the bent cigar: 0.5 below ten dimensions, 2 from ten on.
pub fn default_beta(dim: usize) -> f64 {
    if dim >= 10 {
        2.0
    } else {
        0.5
    }
}

impl ObjectiveSpec {
    /// Untranslated, unrotated instance.
    pub fn new(kind: ObjectiveKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("objective dimension must be positive".into()));
        }
        Ok(Self {
            kind,
            dim,
            translation: vec![0.0; dim],
            rotation: None,
            beta: default_beta(dim),
            evaluations: AtomicU64::new(0),
        })
    }

    /// Translation uniform in `[−2, 2]^d`; the bent cigar also gets a random rotation.
    pub fn random_instance<R: Rng + ?Sized>(kind: ObjectiveKind, dim: usize, rng: &mut R) -> Result<Self> {
        let translation: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        let spec = Self::new(kind, dim)?.with_translation(translation)?;
        if kind == ObjectiveKind::BentCigar {
            let r = random_rotation(dim, rng);
            spec.with_rotation(r)
        } else {
            Ok(spec)
        }
    }

    pub fn with_translation(mut self, translation: Vec<f64>) -> Result<Self> {
        check_len(self.dim, translation.len())?;
        if translation.iter().any(|t| !(-2.0..=2.0).contains(t)) {
            return Err(Error::InvalidConfig("translation must lie in [-2, 2]^d".into()));
        }
        self.translation = translation;
        Ok(self)
    }

    pub fn with_rotation(mut self, rotation: DMatrix<f64>) -> Result<Self> {
        check_len(self.dim, rotation.nrows())?;
        check_len(self.dim, rotation.ncols())?;
        let defect = (rotation.transpose() * &rotation - DMatrix::identity(self.dim, self.dim)).amax();
        if defect > 1e-10 {
            return Err(Error::InvalidConfig("rotation must be orthogonal".into()));
        }
        self.rotation = Some(rotation);
        Ok(self)
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn translation(&self) -> &[f64] {
        &self.translation
    }

    pub fn rotation(&self) -> Option<&DMatrix<f64>> {
        self.rotation.as_ref()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    /// `f(x − translation)`; increments the evaluation counter.
    ///
    /// # Panics
    /// If `x.len()` differs from the dimension.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "objective input has wrong dimension");
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let y: Vec<f64> = x.iter().zip(&self.translation).map(|(a, t)| a - t).collect();
        self.kind.value(&y, self.rotation.as_ref(), self.beta)
    }

    /// Location and value of the global minimum of this instance.
    pub fn optimum(&self) -> (Vec<f64>, f64) {
        // the bent cigar minimizer is the origin for every R since T_asy(0) = 0
        let (y, value) = self.kind.optimum(self.dim);
        (y.iter().zip(&self.translation).map(|(a, t)| a + t).collect(), value)
    }
}

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| (1.0 - w[0]).powi(2) + 100.0 * (w[1] - w[0] * w[0]).powi(2))
        .sum()
}

pub fn cigar(x: &[f64]) -> f64 {
    x[0] * x[0] + 1e4 * x[1..].iter().map(|v| v * v).sum::<f64>()
}

pub fn rastrigin(x: &[f64]) -> f64 {
    const A: f64 = 10.0;
    A * x.len() as f64 + x.iter().map(|v| v * v - A * (2.0 * std::f64::consts::PI * v).cos()).sum::<f64>()
}

pub fn griewank(x: &[f64]) -> f64 {
    let sum: f64 = x.iter().map(|v| v * v / 4000.0).sum();
    let prod: f64 = x.iter().enumerate().map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos()).product();
    sum - prod + 1.0
}

pub fn beale(x: &[f64]) -> f64 {
    let (a, b) = (x[0], x.get(1).copied().unwrap_or(0.0));
    (1.5 - a + a * b).powi(2)
        + (2.25 - a + a * b * b).powi(2)
        + (2.625 - a + a * b.powi(3)).powi(2)
        + x.iter().skip(2).map(|v| v * v).sum::<f64>()
}

pub fn styblinski(x: &[f64]) -> f64 {
    0.5 * x.iter().map(|v| v.powi(4) - 16.0 * v * v + 5.0 * v).sum::<f64>()
}

/// Root of `4x³ − 32x + 5` near −2.9, by Newton iteration.
fn styblinski_minimizer() -> f64 {
    let mut x: f64 = -2.9;
    for _ in 0..50 {
        let step = (4.0 * x * x * x - 32.0 * x + 5.0) / (12.0 * x * x - 32.0);
        x -= step;
        if step.abs() < 1e-16 {
            break;
        }
    }
    x
}

/// Asymmetry operator: positive coordinates are raised to
/// `1 + β · (i − 1)/(d − 1) · √x_i`; the rest are unchanged.
pub fn t_asy(x: &[f64], beta: f64) -> Vec<f64> {
    let d = x.len();
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            if v > 0.0 {
                let frac = if d > 1 { i as f64 / (d - 1) as f64 } else { 0.0 };
                v.powf(1.0 + beta * frac * v.sqrt())
            } else {
                v
            }
        })
        .collect()
}

/// `cigar(R · T_asy(R · y))`.
pub fn bent_cigar(y: &[f64], rotation: &DMatrix<f64>, beta: f64) -> f64 {
    let rotate = |v: &[f64]| -> Vec<f64> {
        (0..v.len())
            .map(|i| (0..v.len()).map(|j| rotation[(i, j)] * v[j]).sum())
            .collect()
    };
    cigar(&rotate(&t_asy(&rotate(y), beta)))
}

/// Haar-distributed rotation: QR of a Gaussian matrix with the signs of `R`'s
/// diagonal folded into `Q`, then one column flipped if needed so `det = +1`.
pub fn random_rotation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let gauss = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = gauss.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn known_zeros() {
        assert_eq!(rosenbrock(&[1.0, 1.0, 1.0]), 0.0);
        assert_eq!(rastrigin(&[0.0; 4]), 0.0);
        assert_eq!(beale(&[3.0, 0.5]), 0.0);
        assert_eq!(cigar(&[1.0, 0.0]), 1.0);
        assert_eq!(griewank(&[0.0; 3]), 0.0);
    }

    #[test]
    fn t_asy_cases() {
        assert_eq!(t_asy(&[-1.0, 0.0, -3.0], 2.0), vec![-1.0, 0.0, -3.0]);
        assert_eq!(t_asy(&[0.7, 2.0, 5.0], 0.0), vec![0.7, 2.0, 5.0]);
        // exponent 1 + 0.5 · 1 · √4 = 2
        assert_eq!(t_asy(&[0.0, 4.0], 0.5), vec![0.0, 16.0]);
    }

    #[test]
    fn rotation_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for d in 1..8 {
            let r = random_rotation(d, &mut rng);
            assert!((r.transpose() * &r - DMatrix::identity(d, d)).amax() < 1e-10);
            assert!((r.determinant() - 1.0).abs() < 1e-10);
        }
        assert_eq!(random_rotation(1, &mut rng), DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn bent_cigar_reduces_to_cigar() {
        let spec = ObjectiveSpec::new(ObjectiveKind::BentCigar, 2)
            .unwrap()
            .with_rotation(DMatrix::identity(2, 2))
            .unwrap()
            .with_beta(0.0);
        assert_eq!(spec.evaluate(&[1.0, 0.0]), 1.0);
    }

    #[test]
    fn names_round_trip() {
        for kind in ObjectiveKind::ALL {
            assert_eq!(kind.name().parse::<ObjectiveKind>().unwrap(), kind);
        }
        assert_eq!("Bent-Cigar".parse::<ObjectiveKind>().unwrap(), ObjectiveKind::BentCigar);
        assert!(matches!("ackley".parse::<ObjectiveKind>(), Err(Error::UnknownObjective(_))));
    }

    #[test]
    fn counter_counts_calls() {
        let spec = ObjectiveSpec::new(ObjectiveKind::Sphere, 3).unwrap();
        for _ in 0..7 {
            spec.evaluate(&[1.0, 2.0, 3.0]);
        }
        assert_eq!(spec.evaluations(), 7);
    }

    #[test]
    fn rejects_bad_instances() {
        let spec = ObjectiveSpec::new(ObjectiveKind::Sphere, 2).unwrap();
        assert!(spec.clone().with_translation(vec![2.5, 0.0]).is_err());
        assert!(spec.clone().with_translation(vec![0.0]).is_err());
        assert!(spec.with_rotation(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])).is_err());
        assert!(ObjectiveSpec::new(ObjectiveKind::Sphere, 0).is_err());
    }

    #[test]
    fn random_instances_stay_in_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for kind in ObjectiveKind::ALL {
            let spec = ObjectiveSpec::random_instance(kind, 5, &mut rng).unwrap();
            assert!(spec.translation().iter().all(|t| (-2.0..=2.0).contains(t)));
            assert_eq!(spec.rotation().is_some(), kind == ObjectiveKind::BentCigar);
        }
    }
}
