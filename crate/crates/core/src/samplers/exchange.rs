//! Replica-exchange swap rule with the mini-batch variance correction.

use std::collections::VecDeque;

use rand::Rng;

use super::langevin::{sgld_step, Metric};
use crate::error::{Error, Result};

/// Swap rate between a low-temperature chain (energy `l1`, temperature `t1`)
/// and a high-temperature chain (`l2`, `t2`):
/// `exp((1/t1 − 1/t2)(l1 − l2 − (1/t1 − 1/t2) σ̃²/C))`.
///
/// The value is not clipped; a swap happens when a uniform draw falls below it.
pub fn swap_rate(l1: f64, l2: f64, t1: f64, t2: f64, variance: f64, correction: f64) -> f64 {
    let dt = 1.0 / t1 - 1.0 / t2;
    (dt * (l1 - l2 - dt * variance / correction)).exp()
}

/// Draws the swap decision for energy estimates `l1`, `l2`.
pub fn swap_accepted<R: Rng + ?Sized>(
    l1: f64,
    l2: f64,
    temperatures: (f64, f64),
    variance: f64,
    correction: f64,
    rng: &mut R,
) -> Result<bool> {
    if !(l1.is_finite() && l2.is_finite()) {
        return Err(Error::ChainFailure { iteration: 0, reason: "non-finite energy estimate".into() });
    }
    let (t1, t2) = temperatures;
    if !(t2 > t1 && t1 > 0.0) {
        return Err(Error::arg(format!("temperatures must satisfy 0 < t1 < t2, got ({t1}, {t2})")));
    }
    let u: f64 = rng.random();
    Ok(u < swap_rate(l1, l2, t1, t2, variance, correction))
}

/// Outcome of a replica-exchange step.
#[derive(Clone, Debug, PartialEq)]
pub struct ExchangeOutcome {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub swapped: bool,
}

/// Advances both chains by one unadjusted Langevin step at their own
/// temperatures, then exchanges them with the corrected swap rate evaluated
/// by `energy` at the new states.
#[allow(clippy::too_many_arguments)]
pub fn resgld_step<R, F>(
    low: &[f64],
    high: &[f64],
    eta: f64,
    temperatures: (f64, f64),
    grads: (&[f64], &[f64]),
    mut energy: F,
    variance: f64,
    correction: f64,
    rng: &mut R,
) -> Result<ExchangeOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Result<f64>,
{
    let (t1, t2) = temperatures;
    let low = sgld_step(low, eta, t1, grads.0, &Metric::Identity, rng)?;
    let high = sgld_step(high, eta, t2, grads.1, &Metric::Identity, rng)?;
    let (l1, l2) = (energy(&low)?, energy(&high)?);
    let swapped = swap_accepted(l1, l2, temperatures, variance, correction, rng)?;
    Ok(if swapped { ExchangeOutcome { low: high, high: low, swapped } } else { ExchangeOutcome { low, high, swapped } })
}

/// Moving-window variance of the energy-difference history `L̃₁ − L̃₂`.
#[derive(Clone, Debug)]
pub struct VarianceWindow {
    values: VecDeque<f64>,
    capacity: usize,
}

impl VarianceWindow {
    pub fn new(capacity: usize) -> Self {
        Self { values: VecDeque::with_capacity(capacity.max(1)), capacity: capacity.max(1) }
    }

    pub fn push(&mut self, value: f64) {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(value);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sample variance of the stored values; zero with fewer than two.
    pub fn variance(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.values.iter().sum::<f64>() / n as f64;
        self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    }
}
