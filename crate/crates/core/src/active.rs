//! Pool-based active learning: hybrid uncertainty / space-filling
//! acquisition and the outer selection loop.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{BasisSet, CandidateLibrary, Dataset, LibraryMode, RowSource};
use crate::identify::{fit, FitConfig, IdentifiedModel, SupportMask};
use crate::samplers::PosteriorSamples;
use crate::seed::{derive, derive_indexed, rng_from_seed};

/// Supplies the time derivative of a pool row on request.
pub trait DerivativeOracle: Sync {
    fn derivative(&self, pool_index: usize) -> Result<Vec<f64>>;
}

/// Oracle backed by a precomputed table with one row per pool index.
#[derive(Clone, Debug)]
pub struct TableOracle {
    table: DMatrix<f64>,
}

impl TableOracle {
    pub fn new(table: DMatrix<f64>) -> Self {
        Self { table }
    }
}

impl DerivativeOracle for TableOracle {
    fn derivative(&self, pool_index: usize) -> Result<Vec<f64>> {
        if pool_index >= self.table.nrows() {
            return Err(Error::OracleMiss(format!("pool row {pool_index} has no derivative")));
        }
        Ok(self.table.row(pool_index).iter().copied().collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Weighted predictive variance plus density-adjusted maximin distance.
    Hybrid,
    /// Uniformly random picks.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionConfig {
    pub strategy: Strategy,
    /// Weight `α` of the variance criterion.
    pub alpha: f64,
    /// Density exponent `λ`.
    pub density_exponent: f64,
    /// Neighbours `K` of the density estimate; `None` means `min(10, pool − 1)`.
    pub neighbors: Option<usize>,
    /// Posterior draws `P` used for the predictive variance.
    pub posterior_draws: usize,
    /// Points `m` added per round.
    pub batch: usize,
    /// Initial random points `n`.
    pub initial: usize,
    /// Budget `N_max`.
    pub budget: usize,
    /// Relative Error-Bar change `Tol` below which the loop stops.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Hybrid,
            alpha: 0.5,
            density_exponent: 0.0,
            neighbors: None,
            posterior_draws: 200,
            batch: 10,
            initial: 20,
            budget: 100,
            tolerance: 0.8,
            seed: 0,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self, pool_size: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Configuration(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.density_exponent >= 0.0) {
            return bad(format!("density exponent must be non-negative, got {}", self.density_exponent));
        }
        if self.batch == 0 || self.initial == 0 {
            return bad("batch and initial sizes must be positive".into());
        }
        if self.posterior_draws < 2 {
            return bad("predictive variance needs at least two posterior draws".into());
        }
        if self.budget < self.initial {
            return Err(Error::arg(format!("budget {} is below the initial size {}", self.budget, self.initial)));
        }
        if pool_size < self.initial + self.batch {
            return Err(Error::arg(format!(
                "pool of {pool_size} rows is smaller than initial + batch = {}",
                self.initial + self.batch
            )));
        }
        if let Some(k) = self.neighbors {
            if k == 0 || k >= pool_size {
                return bad(format!("neighbour count must lie in [1, pool size), got {k}"));
            }
        }
        if !(self.tolerance >= 0.0) {
            return bad("tolerance must be non-negative".into());
        }
        Ok(())
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Population variance of `θ(u)·Ξᵖ` across draws, summed over dimensions.
pub fn predictive_variance(features: &[f64], draws: &[&DMatrix<f64>]) -> Result<f64> {
    if draws.len() < 2 {
        return Err(Error::arg("predictive variance needs at least two draws"));
    }
    let d = draws[0].ncols();
    let p = draws.len() as f64;
    let mut total = 0.0;
    for j in 0..d {
        let preds: Vec<f64> =
            draws.iter().map(|x| features.iter().enumerate().map(|(i, f)| f * x[(i, j)]).sum()).collect();
        let mean = preds.iter().sum::<f64>() / p;
        total += preds.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / p;
    }
    Ok(total)
}

/// `P` draws spaced evenly through the chain.
pub fn spaced_draws(samples: &PosteriorSamples, count: usize) -> Vec<&DMatrix<f64>> {
    let n = samples.len();
    let count = count.min(n);
    (0..count).map(|p| &samples.draws[p * n / count].coefficients).collect()
}

/// Inverse mean distance to the `k` nearest members of `reference`.
/// A zero mean distance yields `+∞`.
pub fn knn_density<'r>(point: &[f64], reference: impl IntoIterator<Item = &'r [f64]>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::arg("neighbour count must be positive"));
    }
    let mut best: Vec<f64> = Vec::with_capacity(k + 1);
    for r in reference {
        let dist = distance(point, r);
        if best.len() < k || dist < best[best.len() - 1] {
            let pos = best.partition_point(|&b| b <= dist);
            best.insert(pos, dist);
            best.truncate(k);
        }
    }
    if best.len() < k {
        return Err(Error::arg(format!("reference set has {} members, need {k}", best.len())));
    }
    let mean = best.iter().sum::<f64>() / k as f64;
    Ok(if mean == 0.0 { f64::INFINITY } else { 1.0 / mean })
}

/// `min_i ‖Θ(u) − Θ(uᵢ)‖ · density^λ`.
pub fn space_filling_score<'s>(
    point: &[f64],
    selected: impl IntoIterator<Item = &'s [f64]>,
    density_exponent: f64,
    density: f64,
) -> Result<f64> {
    let min = selected.into_iter().map(|s| distance(point, s)).fold(f64::INFINITY, f64::min);
    if min.is_infinite() {
        return Err(Error::arg("space-filling score needs at least one selected point"));
    }
    Ok(adjusted(min, density, density_exponent))
}

fn adjusted(min_distance: f64, density: f64, exponent: f64) -> f64 {
    if exponent == 0.0 || min_distance == 0.0 {
        min_distance
    } else {
        min_distance * density.powf(exponent)
    }
}

/// Min-max scaling to `[0, 1]`; a constant input maps to zeros.
pub fn standardize(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) || !(hi - lo).is_finite() {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// `α·σ̃² + (1 − α)·d̃` with both criteria min-max standardized.
pub fn hybrid_scores(variances: &[f64], distances: &[f64], alpha: f64) -> Vec<f64> {
    standardize(variances).into_iter().zip(standardize(distances)).map(|(v, d)| alpha * v + (1.0 - alpha) * d).collect()
}

/// Index of the largest score; ties go to the first.
fn argmax(scores: &[f64]) -> Option<usize> {
    scores
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &s)| match best {
            Some((_, b)) if s.partial_cmp(&b) != Some(Ordering::Greater) => best,
            _ if s.is_nan() => best,
            _ => Some((i, s)),
        })
        .map(|(i, _)| i)
}

/// Candidate pool with its library features and the selected set `M`.
#[derive(Clone, Debug)]
pub struct Pool {
    candidates: Dataset,
    basis: BasisSet,
    features: Vec<f64>,
    width: usize,
    remaining: Vec<usize>,
    selected: Vec<usize>,
    derivatives: Vec<Vec<f64>>,
    rounds: Vec<usize>,
}

impl Pool {
    pub fn new(candidates: Dataset, basis: BasisSet) -> Result<Self> {
        let vars = candidates.library_variables(basis.mode)?;
        let theta = basis.evaluate(&vars);
        let (n, width) = theta.shape();
        let mut features = vec![0.0; n * width];
        for i in 0..n {
            for j in 0..width {
                features[i * width + j] = theta[(i, j)];
            }
        }
        Ok(Self {
            candidates,
            basis,
            features,
            width,
            remaining: (0..n).collect(),
            selected: Vec::new(),
            derivatives: Vec::new(),
            rounds: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.candidates.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self, index: usize) -> &[f64] {
        &self.features[index * self.width..(index + 1) * self.width]
    }

    pub fn remaining(&self) -> &[usize] {
        &self.remaining
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    /// Moves `index` into the selected set after querying its derivative.
    pub fn acquire(&mut self, index: usize, round: usize, oracle: &dyn DerivativeOracle) -> Result<()> {
        let pos = self
            .remaining
            .binary_search(&index)
            .map_err(|_| Error::arg(format!("pool row {index} is not available")))?;
        let derivative = oracle.derivative(index)?;
        let dims = self.candidates.target_dims();
        if derivative.len() != dims || derivative.iter().any(|v| !v.is_finite()) {
            return Err(Error::OracleMiss(format!("pool row {index} returned an invalid derivative")));
        }
        self.remaining.remove(pos);
        self.selected.push(index);
        self.derivatives.push(derivative);
        self.rounds.push(round);
        Ok(())
    }

    /// The selected rows with their derivatives.
    pub fn training_set(&self) -> Dataset {
        let mut data = self.candidates.select(&self.selected);
        let d = self.derivatives.first().map_or(0, Vec::len);
        data.derivatives = Some(DMatrix::from_fn(self.selected.len(), d, |i, j| self.derivatives[i][j]));
        data.provenance = self
            .selected
            .iter()
            .zip(&self.rounds)
            .map(|(&pool_index, &round)| RowSource::Acquired { pool_index, round })
            .collect();
        data
    }

    /// KNN density of every remaining candidate against the rest of the pool.
    pub fn densities(&self, k: usize) -> Result<Vec<f64>> {
        if k >= self.remaining.len() {
            return Err(Error::arg(format!("{k} neighbours need a larger pool than {}", self.remaining.len())));
        }
        let raw: Vec<f64> = self
            .remaining
            .par_iter()
            .map(|&i| {
                let others = self.remaining.iter().filter(|&&o| o != i).map(|&o| self.features(o));
                knn_density(self.features(i), others, k)
            })
            .collect::<Result<_>>()?;
        let max_finite = raw.iter().copied().filter(|v| v.is_finite()).fold(f64::NAN, f64::max);
        let cap = if max_finite.is_nan() { 1.0 } else { max_finite };
        Ok(raw.into_iter().map(|v| if v.is_finite() { v } else { cap }).collect())
    }
}

/// One acquired pool row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub round: usize,
    pub pool_index: usize,
    pub score_variance: f64,
    pub score_distance: f64,
    pub score_total: f64,
    /// Error Bar of the model refit with this row included.
    pub error_bar_after_round: Option<f64>,
}

/// Per-round state of the loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub n_selected: usize,
    pub error_bar: Option<f64>,
    pub k_active: usize,
    /// Support retained by the round's fit.
    pub support: SupportMask,
    /// Extremes of the raw space-filling score over the pool when scored.
    pub min_space_filling: Option<f64>,
    pub max_space_filling: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ActiveResult {
    pub model: IdentifiedModel,
    pub history: Vec<SelectionRecord>,
    pub rounds: Vec<RoundSummary>,
    pub converged: bool,
    pub selected: Vec<usize>,
}

impl ActiveResult {
    /// Size of the training set at the first fit whose Error Bar is below `level`.
    pub fn points_to_reach(&self, level: f64) -> Option<usize> {
        self.rounds.iter().find(|r| r.error_bar.is_some_and(|e| e < level)).map(|r| r.n_selected)
    }
}

struct Scored {
    picks: Vec<(usize, f64, f64, f64)>,
    min_sf: Option<f64>,
    max_sf: Option<f64>,
}

fn score_and_pick(pool: &Pool, samples: &PosteriorSamples, config: &AcquisitionConfig, round: usize) -> Result<Scored> {
    let take = config.batch.min(pool.remaining.len()).min(config.budget.saturating_sub(pool.selected.len()));
    if config.strategy == Strategy::Random {
        let mut rng = rng_from_seed(derive_indexed(config.seed, "random", round as u64));
        let draws: Vec<f64> = pool.remaining.iter().map(|_| rng.random::<f64>()).collect();
        let mut order: Vec<usize> = (0..draws.len()).collect();
        order.sort_by(|&a, &b| draws[b].total_cmp(&draws[a]).then(a.cmp(&b)));
        let picks = order[..take].iter().map(|&o| (pool.remaining[o], f64::NAN, f64::NAN, draws[o])).collect();
        return Ok(Scored { picks, min_sf: None, max_sf: None });
    }
    let draws = spaced_draws(samples, config.posterior_draws);
    let variances: Vec<f64> =
        pool.remaining.par_iter().map(|&i| predictive_variance(pool.features(i), &draws)).collect::<Result<_>>()?;
    let densities = if config.density_exponent > 0.0 {
        let k = config.neighbors.unwrap_or(10).min(pool.remaining.len() - 1);
        pool.densities(k)?
    } else {
        vec![1.0; pool.remaining.len()]
    };
    let mut min_dist: Vec<f64> = pool
        .remaining
        .par_iter()
        .map(|&i| {
            pool.selected.iter().map(|&s| distance(pool.features(i), pool.features(s))).fold(f64::INFINITY, f64::min)
        })
        .collect();
    let sf = |md: &[f64]| -> Vec<f64> {
        md.iter().zip(&densities).map(|(&m, &d)| adjusted(m, d, config.density_exponent)).collect()
    };
    let first = sf(&min_dist);
    let min_sf = first.iter().copied().fold(f64::INFINITY, f64::min);
    let max_sf = first.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut alive = vec![true; pool.remaining.len()];
    let mut picks = Vec::with_capacity(take);
    for _ in 0..take {
        let live: Vec<usize> = (0..alive.len()).filter(|&c| alive[c]).collect();
        let scores_sf = sf(&min_dist);
        let v: Vec<f64> = live.iter().map(|&c| variances[c]).collect();
        let s: Vec<f64> = live.iter().map(|&c| scores_sf[c]).collect();
        let total = hybrid_scores(&v, &s, config.alpha);
        let best = argmax(&total).ok_or_else(|| Error::Precondition("no finite acquisition score".into()))?;
        let c = live[best];
        picks.push((pool.remaining[c], variances[c], scores_sf[c], total[best]));
        alive[c] = false;
        let chosen = pool.features(pool.remaining[c]);
        min_dist.par_iter_mut().zip(pool.remaining.par_iter()).for_each(|(md, &i)| {
            *md = md.min(distance(pool.features(i), chosen));
        });
    }
    Ok(Scored { picks, min_sf: Some(min_sf), max_sf: Some(max_sf) })
}

/// Algorithm: seed `M` with `n` random rows; then repeatedly fit on `M`,
/// stop on budget or when the Error Bar changes by less than `Tol` relative
/// to the previous round, otherwise score the remaining pool and acquire `m`
/// more rows. The last batch is cut so that `|M|` never exceeds the budget.
pub fn active_learning_loop(
    pool: &mut Pool,
    oracle: &dyn DerivativeOracle,
    fit_config: &FitConfig,
    config: &AcquisitionConfig,
) -> Result<ActiveResult> {
    config.validate(pool.len())?;
    if !pool.selected.is_empty() {
        return Err(Error::Precondition("pool already has selected rows".into()));
    }
    let mut rng = rng_from_seed(derive(config.seed, "initial"));
    let mut initial = sample(&mut rng, pool.len(), config.initial).into_vec();
    initial.sort_unstable();
    let mut history: Vec<SelectionRecord> = Vec::new();
    for &i in &initial {
        pool.acquire(i, 0, oracle)?;
        history.push(SelectionRecord {
            round: 0,
            pool_index: i,
            score_variance: f64::NAN,
            score_distance: f64::NAN,
            score_total: f64::NAN,
            error_bar_after_round: None,
        });
    }
    let mut rounds: Vec<RoundSummary> = Vec::new();
    let mut previous: Option<f64> = None;
    let mut round = 0;
    loop {
        let train = pool.training_set();
        let library = CandidateLibrary::new(pool.basis.clone(), &train)?;
        let cfg = FitConfig {
            chain: crate::samplers::ChainConfig {
                seed: derive_indexed(config.seed, "fit", round as u64),
                ..fit_config.chain.clone()
            },
            ..fit_config.clone()
        };
        let model = fit(&train, &library, &cfg).map_err(|e| match e {
            Error::RoundFailure { .. } => e,
            other => Error::RoundFailure { round, source: Box::new(other) },
        })?;
        let e = model.metrics.error_bar;
        for rec in history.iter_mut().filter(|r| r.round == round) {
            rec.error_bar_after_round = e;
        }
        let rel_change = match (e, previous) {
            (Some(now), Some(before)) if now > 0.0 => (now - before).abs() / now,
            (Some(now), Some(before)) if now == before => 0.0,
            _ if config.tolerance.is_infinite() && round > 0 => 0.0,
            _ => f64::INFINITY,
        };
        let converged = round > 0 && rel_change < config.tolerance;
        let summary = RoundSummary {
            round,
            n_selected: pool.selected.len(),
            error_bar: e,
            k_active: model.mask.count(),
            support: model.mask.clone(),
            min_space_filling: None,
            max_space_filling: None,
        };
        rounds.push(summary);
        if converged || pool.selected.len() >= config.budget || pool.remaining.is_empty() {
            return Ok(ActiveResult { model, history, rounds, converged, selected: pool.selected.clone() });
        }
        let scored = score_and_pick(pool, &model.samples, config, round + 1)?;
        if let Some(last) = rounds.last_mut() {
            last.min_space_filling = scored.min_sf;
            last.max_space_filling = scored.max_sf;
        }
        for (index, v, d, total) in scored.picks {
            pool.acquire(index, round + 1, oracle)?;
            history.push(SelectionRecord {
                round: round + 1,
                pool_index: index,
                score_variance: v,
                score_distance: d,
                score_total: total,
                error_bar_after_round: None,
            });
        }
        previous = e;
        round += 1;
    }
}

/// Pool over library variables already stored in `inputs`/`spatial`.
pub fn pool_from_dataset(candidates: Dataset, max_degree: u32, mode: LibraryMode) -> Result<Pool> {
    let basis = match mode {
        LibraryMode::Ode => BasisSet::polynomial(candidates.inputs.ncols(), max_degree)?,
        LibraryMode::Pde => BasisSet::pde(max_degree)?,
    };
    Pool::new(candidates, basis)
}
