//! Search-distribution updates in the latent space.
//!
//! Every optimizer maps the current latent Gaussian and one evaluated
//! population of latent samples to the next latent Gaussian. The driver only
//! sees the [`LatentOptimizer`] trait, so any Gaussian ES fits behind it.

mod pges;
mod utilities;
mod xnes;

pub use pges::{pges_update, Pges};
pub use utilities::{make_utilities, ranking, UtilityWeights};
pub use xnes::{xnes_update, Xnes, XnesRates};

use crate::error::{check_len, Error, Result};
use crate::latent::LatentParams;

/// Latent samples `z_i` with fitness `f(g(z_i))`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluatedLatentPopulation {
    z: Vec<Vec<f64>>,
    f: Vec<f64>,
}

impl EvaluatedLatentPopulation {
    /// Rows of `z` must share one length and match `f` in count. NaN fitness is
    /// rejected; `+inf` is allowed and ranks last.
    pub fn new(z: Vec<Vec<f64>>, f: Vec<f64>) -> Result<Self> {
        check_len(z.len(), f.len())?;
        if let Some(first) = z.first() {
            for row in &z {
                check_len(first.len(), row.len())?;
            }
        }
        if f.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidConfig("fitness values must not be NaN".into()));
        }
        Ok(Self { z, f })
    }

    pub fn z(&self) -> &[Vec<f64>] {
        &self.z
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    fn check_dim(&self, latent: &LatentParams) -> Result<()> {
        match self.z.first() {
            Some(row) => check_len(latent.dim(), row.len()),
            None => Ok(()),
        }
    }
}

/// One step of a latent search-distribution optimizer.
pub trait LatentOptimizer {
    fn update(&mut self, latent: &LatentParams, pop: &EvaluatedLatentPopulation) -> Result<LatentParams>;
}
