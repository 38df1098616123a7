//! Error Bar, MSE and AIC metrics, model reconstruction, credible bands and
//! the threshold sweep.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{BasisSet, CandidateLibrary, Dataset, LibraryMode};
use crate::identify::{fit, mode_estimate, FitConfig, SupportMask};
use crate::samplers::PosteriorSamples;
use crate::seed::rng_from_seed;
use crate::systems::{integrate_rk45, Field, Rk45Options, SpaceGrid, SpectralPde, TimeGrid, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub error_bar: Option<f64>,
    pub mse: f64,
    pub aic: f64,
    pub k_active: usize,
    pub n_points: usize,
    pub dims: usize,
}

impl MetricReport {
    pub fn new(
        error_bar: Option<f64>,
        truth: &DMatrix<f64>,
        prediction: &DMatrix<f64>,
        k_active: usize,
    ) -> Result<Self> {
        let mse = mse(truth, prediction)?;
        let (n, d) = truth.shape();
        Ok(Self { error_bar, mse, aic: aic(mse, k_active, n, d)?, k_active, n_points: n, dims: d })
    }
}

/// Linear interpolation between order statistics of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// `Σ_active s̃ᵢ² / Ξ̃ᵢ²` with the sample variance `s̃²` and the mode estimate `Ξ̃`.
pub fn error_bar(samples: &PosteriorSamples, mask: &SupportMask) -> Result<f64> {
    let modes = mode_estimate(samples)?;
    if mask.count() == 0 {
        return Err(Error::Precondition("error bar needs at least one active coefficient".into()));
    }
    let n = samples.len();
    let mut total = 0.0;
    for (i, j) in mask.active_entries() {
        let mode = modes[(i, j)];
        if mode == 0.0 {
            return Err(Error::DegenerateEntry { basis: i, dim: j });
        }
        let var = if n > 1 {
            samples.draws.iter().map(|d| (d.coefficients[(i, j)] - mode).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        total += var / (mode * mode);
    }
    Ok(total)
}

/// Mean of squared entrywise differences.
pub fn mse(truth: &DMatrix<f64>, prediction: &DMatrix<f64>) -> Result<f64> {
    if truth.shape() != prediction.shape() {
        return Err(Error::arg(format!("shape mismatch: {:?} vs {:?}", truth.shape(), prediction.shape())));
    }
    if truth.is_empty() {
        return Err(Error::arg("empty inputs"));
    }
    Ok((truth - prediction).norm_squared() / truth.len() as f64)
}

/// `2k + N·d·ln(MSE)`; a perfect fit gives `−∞`.
pub fn aic(mse: f64, k_active: usize, n: usize, d: usize) -> Result<f64> {
    if !(mse >= 0.0) {
        return Err(Error::arg(format!("MSE must be non-negative, got {mse}")));
    }
    if mse == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(2.0 * k_active as f64 + (n * d) as f64 * mse.ln())
}

/// Integrates `ẋ = θ(x)·Ξ` for an ODE library.
pub fn reconstruct_ode(
    coefficients: &DMatrix<f64>,
    basis: &BasisSet,
    ic: &[f64],
    grid: &TimeGrid,
    opts: &Rk45Options,
) -> Result<Trajectory> {
    if basis.mode != LibraryMode::Ode {
        return Err(Error::arg("ODE reconstruction needs a state-monomial library"));
    }
    let d = basis.variables.len();
    if coefficients.shape() != (basis.len(), d) || ic.len() != d {
        return Err(Error::arg("coefficients, library and initial condition disagree in size"));
    }
    let active: Vec<(usize, Vec<(usize, f64)>)> = (0..basis.len())
        .map(|i| {
            (i, (0..d).filter(|&j| coefficients[(i, j)] != 0.0).map(|j| (j, coefficients[(i, j)])).collect::<Vec<_>>())
        })
        .filter(|(_, c)| !c.is_empty())
        .collect();
    integrate_rk45(
        |_, x, dx| {
            dx.fill(0.0);
            for (i, cs) in &active {
                let v = basis.descriptors[*i].evaluate(x);
                for &(j, c) in cs {
                    dx[j] += c * v;
                }
            }
        },
        ic,
        grid,
        opts,
    )
}

/// Integrates `u_t = Σ ξ_k θ_k(u, u_x, u_xx)` with spectral spatial derivatives.
pub fn reconstruct_pde(
    coefficients: &DMatrix<f64>,
    basis: &BasisSet,
    space: &SpaceGrid,
    time: &TimeGrid,
    u0: &[f64],
    opts: &Rk45Options,
) -> Result<Field> {
    if basis.mode != LibraryMode::Pde {
        return Err(Error::arg("PDE reconstruction needs a field library"));
    }
    if coefficients.shape() != (basis.len(), 1) || u0.len() != space.n {
        return Err(Error::arg("coefficients, library and initial field disagree in size"));
    }
    let terms: Vec<([u32; 3], f64)> = basis
        .descriptors
        .iter()
        .zip(coefficients.iter())
        .map(|(desc, &c)| ([desc.exponents[0], desc.exponents[1], desc.exponents[2]], c))
        .collect();
    SpectralPde::new(space, &terms).solve(space, time, u0, opts)
}

/// Pointwise posterior-predictive quantiles.
#[derive(Clone, Debug, PartialEq)]
pub struct CredibleBand {
    pub times: Vec<f64>,
    pub lower: DMatrix<f64>,
    pub median: DMatrix<f64>,
    pub upper: DMatrix<f64>,
    pub level: f64,
    pub ensemble_size: usize,
    /// Ensemble members excluded because their reconstruction diverged.
    pub diverged: usize,
}

impl CredibleBand {
    /// Fraction of entries of `truth` inside `[lower, upper]`.
    pub fn coverage(&self, truth: &DMatrix<f64>) -> f64 {
        let inside = truth
            .iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .filter(|(t, (lo, hi))| *lo <= *t && *t <= *hi)
            .count();
        inside as f64 / truth.len() as f64
    }
}

/// Quantile envelope of equally shaped ensemble members.
pub fn band_from_members(
    times: Vec<f64>,
    members: &[DMatrix<f64>],
    level: f64,
    diverged: usize,
) -> Result<CredibleBand> {
    let first = members.first().ok_or(Error::BandUnavailable(diverged))?;
    let (r, c) = first.shape();
    if members.iter().any(|m| m.shape() != (r, c)) {
        return Err(Error::arg("ensemble members differ in shape"));
    }
    let (lo_p, hi_p) = ((1.0 - level) / 2.0, (1.0 + level) / 2.0);
    let mut lower = DMatrix::zeros(r, c);
    let mut median = DMatrix::zeros(r, c);
    let mut upper = DMatrix::zeros(r, c);
    let mut column = vec![0.0; members.len()];
    for i in 0..r {
        for j in 0..c {
            for (slot, m) in column.iter_mut().zip(members) {
                *slot = m[(i, j)];
            }
            column.sort_by(f64::total_cmp);
            lower[(i, j)] = quantile_sorted(&column, lo_p);
            median[(i, j)] = quantile_sorted(&column, 0.5);
            upper[(i, j)] = quantile_sorted(&column, hi_p);
        }
    }
    Ok(CredibleBand { times, lower, median, upper, level, ensemble_size: members.len() + diverged, diverged })
}

/// Reconstructs `ensemble` draws resampled with replacement and returns the
/// pointwise band. `reconstruct` maps a coefficient draw to a prediction and
/// a divergence flag; diverged or truncated members are excluded.
pub fn credible_band<F>(
    samples: &PosteriorSamples,
    times: Vec<f64>,
    level: f64,
    ensemble: usize,
    seed: u64,
    reconstruct: F,
) -> Result<CredibleBand>
where
    F: Fn(&DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> + Sync,
{
    if ensemble < 2 || samples.is_empty() {
        return Err(Error::arg("a credible band needs at least two ensemble members"));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::arg(format!("level must lie in (0, 1), got {level}")));
    }
    let mut rng = rng_from_seed(seed);
    let picks: Vec<usize> = (0..ensemble).map(|_| rng.random_range(0..samples.len())).collect();
    let results: Vec<Result<(DMatrix<f64>, bool)>> =
        picks.par_iter().map(|&p| reconstruct(&samples.draws[p].coefficients)).collect();
    let mut members = Vec::with_capacity(ensemble);
    let mut diverged = 0;
    for r in results {
        match r {
            Ok((m, false)) if m.nrows() == times.len() => members.push(m),
            Ok(_) | Err(Error::InvalidModel(_)) => diverged += 1,
            Err(e) => return Err(e),
        }
    }
    if members.is_empty() {
        return Err(Error::BandUnavailable(ensemble));
    }
    band_from_members(times, &members, level, diverged)
}

/// Band for an ODE model reconstructed from its initial condition.
pub fn credible_band_ode(
    samples: &PosteriorSamples,
    basis: &BasisSet,
    ic: &[f64],
    grid: &TimeGrid,
    level: f64,
    ensemble: usize,
    seed: u64,
) -> Result<CredibleBand> {
    let opts = Rk45Options::default();
    credible_band(samples, grid.times().to_vec(), level, ensemble, seed, |c| {
        let t = reconstruct_ode(c, basis, ic, grid, &opts)?;
        let complete = t.len() == grid.len();
        Ok((t.states, t.diverged || !complete))
    })
}

/// One point of the Error-Bar threshold curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub error_bar: Option<f64>,
    pub k_active: usize,
    pub failure: Option<String>,
}

/// Runs a full fit per threshold. Failures are recorded, not propagated.
pub fn threshold_sweep(
    dataset: &Dataset,
    library: &CandidateLibrary,
    config: &FitConfig,
    thresholds: &[f64],
) -> Result<Vec<SweepPoint>> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::arg("thresholds must be sorted ascending"));
    }
    Ok(thresholds
        .par_iter()
        .map(|&threshold| {
            let cfg = FitConfig { threshold, ..config.clone() };
            match fit(dataset, library, &cfg) {
                Ok(model) => SweepPoint {
                    threshold,
                    error_bar: model.metrics.error_bar,
                    k_active: model.mask.count(),
                    failure: None,
                },
                Err(e) => SweepPoint { threshold, error_bar: None, k_active: 0, failure: Some(e.to_string()) },
            }
        })
        .collect())
}
