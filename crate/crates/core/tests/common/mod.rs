//! Targets with known posteriors shared by the sampler and acceptance tests.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use sysid::posterior::Batch;
use sysid::samplers::{LangevinTarget, Metric};
use sysid::seed::rng_from_seed;
use sysid::Result;

pub fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Bayesian linear regression with known noise and a Gaussian prior.
pub struct Conjugate {
    a: DMatrix<f64>,
    y: DVector<f64>,
    gram: DMatrix<f64>,
    ay: DVector<f64>,
    noise_var: f64,
    prior_var: f64,
}

impl Conjugate {
    pub fn new(seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let n = 200;
        let a = DMatrix::from_fn(n, 3, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
        let truth = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let noise: DVector<f64> =
            DVector::from_fn(n, |_, _| 0.5 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
        let y = &a * truth + noise;
        Self { gram: a.transpose() * &a, ay: a.transpose() * &y, y, a, noise_var: 0.25, prior_var: 10.0 }
    }

    pub fn precision(&self) -> DMatrix<f64> {
        self.a.transpose() * &self.a / self.noise_var + DMatrix::identity(3, 3) / self.prior_var
    }

    pub fn closed_form(&self) -> (DVector<f64>, DMatrix<f64>) {
        let cov = self.precision().try_inverse().unwrap();
        let mean = &cov * self.a.transpose() * &self.y / self.noise_var;
        (mean, cov)
    }
}

impl LangevinTarget for Conjugate {
    fn dim(&self) -> usize {
        3
    }

    fn n_data(&self) -> usize {
        self.a.nrows()
    }

    fn energy(&self, x: &[f64], batch: Batch) -> Result<f64> {
        let mut g = vec![0.0; 3];
        self.energy_grad(x, batch, &mut g)
    }

    fn energy_grad(&self, x: &[f64], batch: Batch, grad: &mut [f64]) -> Result<f64> {
        let n = self.a.nrows();
        let mut e = 0.0;
        for (gi, xi) in grad.iter_mut().zip(x) {
            *gi = xi / self.prior_var;
            e += xi * xi / (2.0 * self.prior_var);
        }
        let rows = match batch {
            Batch::Full => {
                let v = DVector::from_column_slice(x);
                let gv = &self.gram * &v;
                let rss = v.dot(&gv) - 2.0 * v.dot(&self.ay) + self.y.norm_squared();
                for (gj, (a, b)) in grad.iter_mut().zip(gv.iter().zip(self.ay.iter())) {
                    *gj += (a - b) / self.noise_var;
                }
                return Ok(e + rss / (2.0 * self.noise_var));
            }
            Batch::Rows(r) => r,
        };
        let scale = n as f64 / rows.len() as f64;
        for &i in rows {
            let r = (0..3).map(|j| self.a[(i, j)] * x[j]).sum::<f64>() - self.y[i];
            e += scale * r * r / (2.0 * self.noise_var);
            for (j, gj) in grad.iter_mut().enumerate() {
                *gj += scale * r * self.a[(i, j)] / self.noise_var;
            }
        }
        Ok(e)
    }

    fn metric(&self, _block: usize, _x: &[f64]) -> Result<Metric> {
        Metric::from_precision(self.precision())
    }
}

/// Equal-weight mixture of unit-variance normals at ±3.
pub struct Mixture;

impl LangevinTarget for Mixture {
    fn dim(&self) -> usize {
        1
    }

    fn n_data(&self) -> usize {
        0
    }

    fn energy(&self, x: &[f64], _batch: Batch) -> Result<f64> {
        let (a, b) = (-(x[0] - 3.0).powi(2) / 2.0, -(x[0] + 3.0).powi(2) / 2.0);
        let m = a.max(b);
        Ok(-(m + ((a - m).exp() + (b - m).exp()).ln()))
    }

    fn energy_grad(&self, x: &[f64], batch: Batch, grad: &mut [f64]) -> Result<f64> {
        let w = 1.0 / (1.0 + (-6.0 * x[0]).exp());
        grad[0] = x[0] - 3.0 * (2.0 * w - 1.0);
        self.energy(x, batch)
    }
}

/// Share of draws in the positive mode.
pub fn occupancy(draws: &[Vec<f64>]) -> f64 {
    draws.iter().filter(|d| d[0] > 0.0).count() as f64 / draws.len() as f64
}
