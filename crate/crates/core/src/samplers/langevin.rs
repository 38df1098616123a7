//! Single Langevin transitions and step-size schedules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Proposal covariance `P` used to precondition a Langevin step.
#[derive(Clone, Debug)]
pub enum Metric {
    Identity,
    /// Diagonal of `P`.
    Diagonal(Vec<f64>),
    /// `P = A⁻¹` given the precision `A` and its Cholesky factor.
    Precision {
        precision: DMatrix<f64>,
        factor: Cholesky<f64, Dyn>,
    },
}

impl Metric {
    /// Builds a dense metric from a symmetric positive definite precision.
    pub fn from_precision(precision: DMatrix<f64>) -> Result<Self> {
        let factor = precision
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Precondition("precision matrix is not positive definite".into()))?;
        Ok(Metric::Precision { precision, factor })
    }

    /// `P g`.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        match self {
            Metric::Identity => g.to_vec(),
            Metric::Diagonal(p) => g.iter().zip(p).map(|(a, b)| a * b).collect(),
            Metric::Precision { factor, .. } => factor.solve(&DVector::from_column_slice(g)).as_slice().to_vec(),
        }
    }

    /// A draw from `N(0, P)` given standard normals `z`.
    pub fn sqrt_apply(&self, z: &[f64]) -> Vec<f64> {
        match self {
            Metric::Identity => z.to_vec(),
            Metric::Diagonal(p) => z.iter().zip(p).map(|(a, b)| a * b.sqrt()).collect(),
            Metric::Precision { factor, .. } => {
                // With A = L Lᵀ, x = L⁻ᵀ z has covariance A⁻¹.
                let mut v = DVector::from_column_slice(z);
                factor.l_dirty().tr_solve_lower_triangular_mut(&mut v);
                v.as_slice().to_vec()
            }
        }
    }

    /// `vᵀ P⁻¹ v`.
    pub fn inverse_quadratic(&self, v: &[f64]) -> f64 {
        match self {
            Metric::Identity => v.iter().map(|a| a * a).sum(),
            Metric::Diagonal(p) => v.iter().zip(p).map(|(a, b)| a * a / b).sum(),
            Metric::Precision { precision, .. } => {
                let x = DVector::from_column_slice(v);
                x.dot(&(precision * &x))
            }
        }
    }

    fn check_len(&self, n: usize) -> Result<()> {
        let len = match self {
            Metric::Identity => n,
            Metric::Diagonal(p) => p.len(),
            Metric::Precision { precision, .. } => precision.nrows(),
        };
        if len != n {
            return Err(Error::arg(format!("metric has dimension {len}, state has {n}")));
        }
        Ok(())
    }
}

fn check_step(eta: f64, temperature: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::arg(format!("step size must be positive, got {eta}")));
    }
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::arg(format!("temperature must be non-negative, got {temperature}")));
    }
    Ok(())
}

fn drift_mean(x: &[f64], eta: f64, grad: &[f64], metric: &Metric) -> Vec<f64> {
    metric.apply(grad).iter().zip(x).map(|(pg, xi)| xi - eta * pg).collect()
}

/// `x − η P ∇E(x) + sqrt(2ητ) P^{1/2} ξ`.
pub fn sgld_step<R: Rng + ?Sized>(
    x: &[f64],
    eta: f64,
    temperature: f64,
    grad: &[f64],
    metric: &Metric,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_step(eta, temperature)?;
    if grad.len() != x.len() {
        return Err(Error::arg("gradient and state lengths differ"));
    }
    metric.check_len(x.len())?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::ChainFailure { iteration: 0, reason: "non-finite gradient".into() });
    }
    let z: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
    let noise = metric.sqrt_apply(&z);
    let scale = (2.0 * eta * temperature).sqrt();
    Ok(drift_mean(x, eta, grad, metric).iter().zip(&noise).map(|(m, n)| m + scale * n).collect())
}

/// Result of one Metropolis-adjusted step.
#[derive(Clone, Debug)]
pub struct MalaOutcome {
    pub state: Vec<f64>,
    pub accepted: bool,
    pub energy: f64,
    pub gradient: Vec<f64>,
}

/// Metropolis-adjusted Langevin step targeting `exp(−E/τ)`.
///
/// `energy_grad` writes `∇E` into its second argument and returns `E`. The
/// current energy and gradient are passed in so that callers can reuse them.
#[allow(clippy::too_many_arguments)]
pub fn mala_step<R, F>(
    x: &[f64],
    energy: f64,
    grad: &[f64],
    eta: f64,
    temperature: f64,
    metric: &Metric,
    mut energy_grad: F,
    rng: &mut R,
) -> Result<MalaOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    if temperature == 0.0 {
        return Err(Error::arg("Metropolis adjustment needs a positive temperature"));
    }
    let proposal = sgld_step(x, eta, temperature, grad, metric, rng)?;
    let mut g_new = vec![0.0; x.len()];
    let e_new = energy_grad(&proposal, &mut g_new)?;
    let log_q = |to: &[f64], from: &[f64], g: &[f64]| {
        let mean = drift_mean(from, eta, g, metric);
        let diff: Vec<f64> = to.iter().zip(&mean).map(|(a, b)| a - b).collect();
        -metric.inverse_quadratic(&diff) / (4.0 * eta * temperature)
    };
    let log_alpha = -(e_new - energy) / temperature + log_q(x, &proposal, &g_new) - log_q(&proposal, x, grad);
    let u: f64 = rng.random();
    let accepted = e_new.is_finite() && g_new.iter().all(|g| g.is_finite()) && u.ln() < log_alpha;
    Ok(if accepted {
        MalaOutcome { state: proposal, accepted, energy: e_new, gradient: g_new }
    } else {
        MalaOutcome { state: x.to_vec(), accepted, energy, gradient: grad.to_vec() }
    })
}

/// Cosine cyclical schedule `η_k = η₀/2 [cos(π·mod(k−1, ⌊K/M⌋)/⌊K/M⌋) + 1]`,
/// with `k` counted from 1.
pub fn cyclical_step_size(k: usize, eta0: f64, cycles: usize, total: usize) -> Result<f64> {
    if cycles == 0 || total < cycles {
        return Err(Error::Configuration(format!("{cycles} cycles do not fit in {total} iterations")));
    }
    if k == 0 {
        return Err(Error::arg("iteration index starts at 1"));
    }
    let period = total / cycles;
    let phase = ((k - 1) % period) as f64 / period as f64;
    Ok(eta0 / 2.0 * ((std::f64::consts::PI * phase).cos() + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn cyclical_schedule_restarts_each_cycle() {
        let eta0 = 0.3;
        for k in [1, 251, 501, 751] {
            assert_eq!(cyclical_step_size(k, eta0, 4, 1000).unwrap(), eta0);
        }
        let mid = cyclical_step_size(126, eta0, 4, 1000).unwrap();
        assert!((mid - eta0 / 2.0).abs() < 1e-12);
        for k in 1..=1000 {
            let e = cyclical_step_size(k, eta0, 4, 1000).unwrap();
            assert!(e > 0.0 && e <= eta0);
        }
        assert!(cyclical_step_size(1, eta0, 0, 10).is_err());
        assert!(cyclical_step_size(1, eta0, 11, 10).is_err());
    }

    #[test]
    fn metric_views_are_consistent() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let m = Metric::from_precision(a.clone()).unwrap();
        let g = [1.0, -2.0];
        let pg = m.apply(&g);
        let back = &a * DVector::from_column_slice(&pg);
        assert!((back[0] - 1.0).abs() < 1e-12 && (back[1] + 2.0).abs() < 1e-12);
        let v = [0.5, 0.25];
        let direct = 4.0 * 0.25 + 2.0 * 0.125 + 3.0 * 0.0625;
        assert!((m.inverse_quadratic(&v) - direct).abs() < 1e-12);
        assert!(Metric::from_precision(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
    }

    #[test]
    fn sgld_rejects_non_finite_gradient() {
        let mut rng = rng_from_seed(0);
        let r = sgld_step(&[0.0], 0.1, 1.0, &[f64::NAN], &Metric::Identity, &mut rng);
        assert!(matches!(r, Err(Error::ChainFailure { .. })));
        assert!(sgld_step(&[0.0], 0.0, 1.0, &[0.0], &Metric::Identity, &mut rng).is_err());
    }

    #[test]
    fn mala_accepts_almost_surely_for_tiny_steps() {
        let mut rng = rng_from_seed(1);
        let eg = |x: &[f64], g: &mut [f64]| {
            g[0] = x[0];
            g[1] = 4.0 * x[1];
            Ok(0.5 * x[0] * x[0] + 2.0 * x[1] * x[1])
        };
        let mut x = vec![0.3, -0.2];
        let mut g = vec![0.3, -0.8];
        let mut e = 0.045 + 0.08;
        let mut accepted = 0;
        for _ in 0..1000 {
            let out = mala_step(&x, e, &g, 1e-8, 1.0, &Metric::Identity, eg, &mut rng).unwrap();
            accepted += out.accepted as usize;
            x = out.state;
            g = out.gradient;
            e = out.energy;
        }
        assert!(accepted >= 999);
    }
}
