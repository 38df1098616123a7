//! Flat-vector view of the horseshoe posterior for the generic samplers.
//!
//! Layout: active coefficients, then their log local scales, `log τ`,
//! `log c²` and the per-dimension `log σ²`. Two blocks are updated in turn:
//! the coefficients, preconditioned by their exact conditional covariance,
//! and the remaining log-scale parameters with a fixed diagonal metric.

use std::ops::Range;

use nalgebra::DMatrix;

use super::{Diagnostics, LangevinTarget, Metric};
use crate::error::{Error, Result};
use crate::posterior::{Batch, HorseshoeHyper, Posterior, SamplerState};

/// One retained posterior draw.
#[derive(Clone, Debug, PartialEq)]
pub struct Draw {
    pub coefficients: DMatrix<f64>,
    pub log_tau: f64,
    pub log_c2: f64,
    pub noise_log_sigma2: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PosteriorSamples {
    pub draws: Vec<Draw>,
    pub diagnostics: Diagnostics,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Draws of a single coefficient.
    pub fn coefficient(&self, basis: usize, dim: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.coefficients[(basis, dim)]).collect()
    }

    pub fn mean(&self) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.draws[0].coefficients.nrows(), self.draws[0].coefficients.ncols());
        for d in &self.draws {
            acc += &d.coefficients;
        }
        acc / self.draws.len() as f64
    }

    /// Population variance of every coefficient.
    pub fn variance(&self) -> DMatrix<f64> {
        let mean = self.mean();
        let mut acc = DMatrix::zeros(mean.nrows(), mean.ncols());
        for d in &self.draws {
            let diff = &d.coefficients - &mean;
            acc += diff.component_mul(&diff);
        }
        acc / self.draws.len() as f64
    }
}

pub struct PosteriorTarget<'p, 'a> {
    posterior: &'p Posterior<'a>,
    entries: Vec<(usize, usize)>,
    template: HorseshoeHyper,
}

impl<'p, 'a> PosteriorTarget<'p, 'a> {
    /// `template` supplies the shapes and the frozen local scales of masked entries.
    pub fn new(posterior: &'p Posterior<'a>, template: &SamplerState) -> Result<Self> {
        let (m, d) = (posterior.n_basis(), posterior.dims());
        if template.coefficients.shape() != (m, d) || template.noise_log_sigma2.len() != d {
            return Err(Error::arg("initial state does not match the posterior dimensions"));
        }
        Ok(Self { posterior, entries: posterior.mask().active_entries(), template: template.hyper.clone() })
    }

    fn k(&self) -> usize {
        self.entries.len()
    }

    pub fn flatten(&self, state: &SamplerState) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        x.extend(self.entries.iter().map(|&e| state.coefficients[e]));
        x.extend(self.entries.iter().map(|&e| state.hyper.log_lambda[e]));
        x.push(state.hyper.log_tau);
        x.push(state.hyper.log_c2);
        x.extend_from_slice(&state.noise_log_sigma2);
        x
    }

    pub fn unflatten(&self, x: &[f64]) -> SamplerState {
        let (m, d) = (self.posterior.n_basis(), self.posterior.dims());
        let k = self.k();
        let mut coefficients = DMatrix::zeros(m, d);
        let mut hyper = self.template.clone();
        for (a, &e) in self.entries.iter().enumerate() {
            coefficients[e] = x[a];
            hyper.log_lambda[e] = x[k + a];
        }
        hyper.log_tau = x[2 * k];
        hyper.log_c2 = x[2 * k + 1];
        SamplerState { coefficients, hyper, noise_log_sigma2: x[2 * k + 2..].to_vec() }
    }

    pub fn draw(&self, x: &[f64]) -> Draw {
        let s = self.unflatten(x);
        Draw {
            coefficients: s.coefficients,
            log_tau: s.hyper.log_tau,
            log_c2: s.hyper.log_c2,
            noise_log_sigma2: s.noise_log_sigma2,
        }
    }
}

impl LangevinTarget for PosteriorTarget<'_, '_> {
    fn dim(&self) -> usize {
        2 * self.k() + 2 + self.posterior.dims()
    }

    fn n_data(&self) -> usize {
        self.posterior.n_rows()
    }

    fn blocks(&self) -> Vec<Range<usize>> {
        vec![0..self.k(), self.k()..self.dim()]
    }

    fn energy(&self, x: &[f64], batch: Batch) -> Result<f64> {
        self.posterior.energy(&self.unflatten(x), batch)
    }

    fn energy_grad(&self, x: &[f64], batch: Batch, grad: &mut [f64]) -> Result<f64> {
        let (e, g) = self.posterior.grad_energy(&self.unflatten(x), batch)?;
        let k = self.k();
        for (a, &ent) in self.entries.iter().enumerate() {
            grad[a] = g.coefficients[ent];
            grad[k + a] = g.log_lambda[ent];
        }
        grad[2 * k] = g.log_tau;
        grad[2 * k + 1] = g.log_c2;
        grad[2 * k + 2..].copy_from_slice(&g.noise_log_sigma2);
        Ok(e)
    }

    fn metric(&self, block: usize, x: &[f64]) -> Result<Metric> {
        let k = self.k();
        if block == 0 {
            let state = self.unflatten(x);
            let mut precision = DMatrix::zeros(k, k);
            let mut offset = 0;
            for j in 0..self.posterior.dims() {
                let p = self.posterior.conditional_precision(&state, j);
                let n = p.nrows();
                precision.view_mut((offset, offset), (n, n)).copy_from(&p);
                offset += n;
            }
            let diagonal: Vec<f64> = (0..k).map(|a| 1.0 / precision[(a, a)].max(f64::MIN_POSITIVE)).collect();
            return Metric::from_precision(precision).or(Ok(Metric::Diagonal(diagonal)));
        }
        let k_eff = k.max(1) as f64;
        let n = self.posterior.n_rows() as f64;
        let mut diag = vec![1.0; k];
        diag.push(1.0 / k_eff);
        diag.push(2.0 / k_eff.max(2.0));
        diag.extend(std::iter::repeat_n(1.0 / (0.5 * n + 1.0), self.posterior.dims()));
        Ok(Metric::Diagonal(diag))
    }
}
