use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Field, Trajectory};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Measurement noise model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Additive zero-mean Gaussian with standard deviation `fraction · std`.
    Gaussian { fraction: f64 },
    /// Multiplicative `exp(N(mu, sigma²))` factor per entry.
    LogNormal { mu: f64, sigma: f64 },
}

impl NoiseModel {
    fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Gaussian { fraction } if !(fraction >= 0.0 && fraction.is_finite()) => {
                Err(Error::arg(format!("noise fraction must be non-negative, got {fraction}")))
            }
            NoiseModel::LogNormal { mu, sigma } if !(sigma >= 0.0 && sigma.is_finite() && mu.is_finite()) => {
                Err(Error::arg(format!("invalid lognormal parameters ({mu}, {sigma})")))
            }
            _ => Ok(()),
        }
    }

    fn is_identity(&self) -> bool {
        match *self {
            NoiseModel::Gaussian { fraction } => fraction == 0.0,
            NoiseModel::LogNormal { mu, sigma } => mu == 0.0 && sigma == 0.0,
        }
    }
}

fn population_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Applies `noise` to a matrix. With `per_column`, Gaussian amplitudes use
/// each column's own standard deviation, otherwise the standard deviation of
/// all entries.
pub fn add_noise_matrix(data: &DMatrix<f64>, noise: &NoiseModel, seed: u64, per_column: bool) -> Result<DMatrix<f64>> {
    noise.validate()?;
    if noise.is_identity() {
        return Ok(data.clone());
    }
    let mut rng = rng_from_seed(seed);
    let mut out = data.clone();
    match *noise {
        NoiseModel::Gaussian { fraction } => {
            let global = population_std(data.iter().copied());
            let scales: Vec<f64> = (0..data.ncols())
                .map(|j| {
                    if per_column {
                        fraction * population_std(data.column(j).iter().copied())
                    } else {
                        fraction * global
                    }
                })
                .collect();
            // Row-major draw order so that the stream does not depend on storage layout.
            for i in 0..data.nrows() {
                for (j, &scale) in scales.iter().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    out[(i, j)] += scale * z;
                }
            }
        }
        NoiseModel::LogNormal { mu, sigma } => {
            for i in 0..data.nrows() {
                for j in 0..data.ncols() {
                    let z: f64 = rng.sample(StandardNormal);
                    out[(i, j)] *= (mu + sigma * z).exp();
                }
            }
        }
    }
    Ok(out)
}

/// Noise injection for simulated data.
pub trait AddNoise: Sized {
    fn add_noise(&self, noise: &NoiseModel, seed: u64) -> Result<Self>;
}

impl AddNoise for Trajectory {
    /// Each state dimension gets its own amplitude.
    fn add_noise(&self, noise: &NoiseModel, seed: u64) -> Result<Self> {
        Ok(Trajectory { states: add_noise_matrix(&self.states, noise, seed, true)?, ..self.clone() })
    }
}

impl AddNoise for Field {
    /// The field is a single quantity; the amplitude uses the standard
    /// deviation over all space-time samples.
    fn add_noise(&self, noise: &NoiseModel, seed: u64) -> Result<Self> {
        Ok(Field { values: add_noise_matrix(&self.values, noise, seed, false)?, ..self.clone() })
    }
}
