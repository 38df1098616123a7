//! Sequential-thresholding identification: sample the posterior, drop
//! coefficients whose mode estimate falls below a threshold, resample on the
//! reduced support until it stops changing.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{error_bar, quantile_sorted};
use crate::features::{CandidateLibrary, Dataset};
use crate::posterior::{CoefficientMatrix, HorseshoePrior, Posterior};
use crate::samplers::{run_chain, ChainConfig, PosteriorSamples};
use crate::seed::derive_indexed;

/// Active (basis, state-dimension) pairs.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SupportMask {
    n_basis: usize,
    dims: usize,
    /// Column-major: entry `(i, j)` at `j * n_basis + i`.
    active: Vec<bool>,
}

impl SupportMask {
    pub fn full(n_basis: usize, dims: usize) -> Self {
        Self { n_basis, dims, active: vec![true; n_basis * dims] }
    }

    pub fn empty(n_basis: usize, dims: usize) -> Self {
        Self { n_basis, dims, active: vec![false; n_basis * dims] }
    }

    pub fn from_fn(n_basis: usize, dims: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut mask = Self::empty(n_basis, dims);
        for j in 0..dims {
            for i in 0..n_basis {
                mask.set(i, j, f(i, j));
            }
        }
        mask
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn is_active(&self, basis: usize, dim: usize) -> bool {
        self.active[dim * self.n_basis + basis]
    }

    pub fn set(&mut self, basis: usize, dim: usize, value: bool) {
        self.active[dim * self.n_basis + basis] = value;
    }

    pub fn count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn active_in_dim(&self, dim: usize) -> Vec<usize> {
        (0..self.n_basis).filter(|&i| self.is_active(i, dim)).collect()
    }

    /// Active entries ordered by dimension, then basis.
    pub fn active_entries(&self) -> Vec<(usize, usize)> {
        (0..self.dims).flat_map(|j| self.active_in_dim(j).into_iter().map(move |i| (i, j))).collect()
    }

    /// Dimensions without any active basis.
    pub fn unidentifiable_dims(&self) -> Vec<usize> {
        (0..self.dims).filter(|&j| self.active_in_dim(j).is_empty()).collect()
    }

    /// Whether every entry active here is also active in `other`.
    pub fn is_subset_of(&self, other: &SupportMask) -> bool {
        self.active.iter().zip(&other.active).all(|(&a, &b)| !a || b)
    }

    /// Zeroes the entries of `m` outside the mask.
    pub fn apply(&self, m: &mut DMatrix<f64>) {
        for j in 0..self.dims {
            for i in 0..self.n_basis {
                if !self.is_active(i, j) {
                    m[(i, j)] = 0.0;
                }
            }
        }
    }
}

/// Posterior mode estimate: the mean of the retained draws.
pub fn mode_estimate(samples: &PosteriorSamples) -> Result<CoefficientMatrix> {
    if samples.is_empty() {
        return Err(Error::Precondition("no posterior draws".into()));
    }
    Ok(samples.mean())
}

/// Keeps entry `(i, j)` iff it is active in `mask` and `|modes[i, j]| ≥ c`.
pub fn threshold_support(modes: &CoefficientMatrix, threshold: f64, mask: &SupportMask) -> Result<SupportMask> {
    if !(threshold >= 0.0) {
        return Err(Error::arg(format!("threshold must be non-negative, got {threshold}")));
    }
    if modes.shape() != (mask.n_basis(), mask.dims()) {
        return Err(Error::arg("mode matrix does not match the mask"));
    }
    Ok(SupportMask::from_fn(mask.n_basis(), mask.dims(), |i, j| {
        mask.is_active(i, j) && modes[(i, j)].abs() >= threshold
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub chain: ChainConfig,
    pub threshold: f64,
    pub max_outer: usize,
    pub prior: HorseshoePrior,
    /// Ridge factor of the least-squares start, relative to the largest
    /// diagonal entry of the Gram matrix.
    pub ridge: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            chain: ChainConfig::default(),
            threshold: 0.05,
            max_outer: 10,
            prior: HorseshoePrior::default(),
            ridge: 1e-6,
        }
    }
}

/// Summary of one active coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntrySummary {
    pub basis: usize,
    pub dim: usize,
    pub name: String,
    pub mode: f64,
    pub std: f64,
    pub q025: f64,
    pub q975: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub error_bar: Option<f64>,
    pub mse: Option<f64>,
    pub mse_out_of_sample: Option<f64>,
    pub aic: Option<f64>,
    pub k_active: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitProvenance {
    pub chain: ChainConfig,
    pub threshold: f64,
    pub max_outer: usize,
    pub prior: HorseshoePrior,
    pub ridge: f64,
    pub seed: u64,
    /// Seeds of the individual sampling rounds.
    pub round_seeds: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct IdentifiedModel {
    pub mask: SupportMask,
    pub basis_names: Vec<String>,
    pub modes: CoefficientMatrix,
    pub summary: Vec<EntrySummary>,
    pub samples: PosteriorSamples,
    pub metrics: ModelMetrics,
    /// Dimensions left without any active basis.
    pub unidentifiable: Vec<usize>,
    /// Whether the support was unchanged by the last thresholding step.
    pub converged: bool,
    /// Support at the start of every sampling round.
    pub round_masks: Vec<SupportMask>,
    pub provenance: FitProvenance,
}

impl IdentifiedModel {
    pub fn rounds(&self) -> usize {
        self.round_masks.len()
    }

    pub fn coefficient(&self, name: &str, dim: usize) -> Option<f64> {
        let i = self.basis_names.iter().position(|n| n == name)?;
        self.mask.is_active(i, dim).then(|| self.modes[(i, dim)])
    }
}

fn summarize(
    samples: &PosteriorSamples,
    mask: &SupportMask,
    names: &[String],
) -> (CoefficientMatrix, Vec<EntrySummary>) {
    let mut modes = samples.mean();
    mask.apply(&mut modes);
    let n = samples.len() as f64;
    let summary = mask
        .active_entries()
        .into_iter()
        .map(|(i, j)| {
            let mut draws = samples.coefficient(i, j);
            let mean = modes[(i, j)];
            let var =
                if draws.len() > 1 { draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            draws.sort_by(f64::total_cmp);
            EntrySummary {
                basis: i,
                dim: j,
                name: names[i].clone(),
                mode: mean,
                std: var.sqrt(),
                q025: quantile_sorted(&draws, 0.025),
                q975: quantile_sorted(&draws, 0.975),
            }
        })
        .collect();
    (modes, summary)
}

/// Sequential thresholding from the full support.
pub fn fit(dataset: &Dataset, library: &CandidateLibrary, config: &FitConfig) -> Result<IdentifiedModel> {
    let mask = SupportMask::full(library.n_basis(), dataset.target_dims());
    fit_from_mask(dataset, library, config, mask)
}

/// Sequential thresholding starting from `initial`.
pub fn fit_from_mask(
    dataset: &Dataset,
    library: &CandidateLibrary,
    config: &FitConfig,
    initial: SupportMask,
) -> Result<IdentifiedModel> {
    config.chain.validate()?;
    if config.max_outer == 0 {
        return Err(Error::Configuration("max_outer must be at least 1".into()));
    }
    if !(config.threshold >= 0.0) {
        return Err(Error::Configuration(format!("threshold must be non-negative, got {}", config.threshold)));
    }
    let targets = dataset.require_derivatives()?;
    if library.n_rows() != dataset.n_rows() {
        return Err(Error::arg("library and dataset row counts differ"));
    }
    if initial.n_basis() != library.n_basis() || initial.dims() != targets.ncols() {
        return Err(Error::arg("initial mask does not match the library"));
    }
    let names: Vec<String> = library.basis.names().iter().map(|s| s.to_string()).collect();
    let mut mask = initial;
    let mut round_masks = Vec::new();
    let mut round_seeds = Vec::new();
    let mut last: Option<PosteriorSamples> = None;
    let mut converged = false;
    for round in 0..config.max_outer {
        if mask.count() == 0 {
            break;
        }
        let seed = derive_indexed(config.chain.seed, "round", round as u64);
        let chain = ChainConfig { seed, ..config.chain.clone() };
        let posterior = Posterior::from_parts(&library.theta, targets, &mask, config.prior)?;
        let init = posterior.initial_state(config.ridge);
        let samples =
            run_chain(&chain, &posterior, &init).map_err(|e| Error::RoundFailure { round, source: Box::new(e) })?;
        round_masks.push(mask.clone());
        round_seeds.push(seed);
        let modes = mode_estimate(&samples)?;
        let next = threshold_support(&modes, config.threshold, &mask)?;
        last = Some(samples);
        if next == mask {
            converged = true;
            break;
        }
        if next.count() == 0 {
            mask = next;
            converged = true;
            break;
        }
        if round + 1 < config.max_outer {
            mask = next;
        }
    }
    let mut samples = last.ok_or_else(|| Error::Precondition("initial support is empty".into()))?;
    if mask.count() == 0 {
        for d in &mut samples.draws {
            mask.apply(&mut d.coefficients);
        }
    }
    let (modes, summary) = summarize(&samples, &mask, &names);
    let error_bar = if mask.count() > 0 { error_bar(&samples, &mask).ok() } else { None };
    Ok(IdentifiedModel {
        unidentifiable: mask.unidentifiable_dims(),
        metrics: ModelMetrics { error_bar, k_active: mask.count(), ..ModelMetrics::default() },
        mask,
        basis_names: names,
        modes,
        summary,
        samples,
        converged,
        round_masks,
        provenance: FitProvenance {
            chain: config.chain.clone(),
            threshold: config.threshold,
            max_outer: config.max_outer,
            prior: config.prior,
            ridge: config.ridge,
            seed: config.chain.seed,
            round_seeds,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::{Diagnostics, Draw};

    fn samples_from(values: &[f64]) -> PosteriorSamples {
        PosteriorSamples {
            draws: values
                .iter()
                .map(|&v| Draw {
                    coefficients: DMatrix::from_element(1, 1, v),
                    log_tau: 0.0,
                    log_c2: 0.0,
                    noise_log_sigma2: vec![0.0],
                })
                .collect(),
            diagnostics: Diagnostics::default(),
        }
    }

    #[test]
    fn mode_is_the_draw_mean() {
        assert_eq!(mode_estimate(&samples_from(&[1.0, 2.0, 3.0])).unwrap()[(0, 0)], 2.0);
        assert_eq!(mode_estimate(&samples_from(&[0.3; 5])).unwrap()[(0, 0)], 0.3);
        assert!(mode_estimate(&samples_from(&[])).is_err());
    }

    #[test]
    fn zero_threshold_keeps_mask() {
        let mask = SupportMask::from_fn(3, 2, |i, j| i != j);
        let modes = DMatrix::from_element(3, 2, 0.0);
        assert_eq!(threshold_support(&modes, 0.0, &mask).unwrap(), mask);
        let gone = threshold_support(&modes, 1e-3, &mask).unwrap();
        assert_eq!(gone.count(), 0);
        assert_eq!(gone.unidentifiable_dims(), vec![0, 1]);
        assert!(threshold_support(&modes, -1.0, &mask).is_err());
    }

    #[test]
    fn entries_are_grouped_by_dimension() {
        let mask = SupportMask::from_fn(3, 2, |i, j| (i + j) % 2 == 0);
        assert_eq!(mask.active_entries(), vec![(0, 0), (2, 0), (1, 1)]);
        assert!(mask.is_subset_of(&SupportMask::full(3, 2)));
        assert!(!SupportMask::full(3, 2).is_subset_of(&mask));
    }
}
