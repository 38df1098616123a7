//! Regularized-horseshoe posterior over library coefficients.
//!
//! Coordinates: active coefficients `β`, log local scales `log λ` (one per
//! active coefficient), `log τ`, `log c²` and per-dimension log noise
//! variances `log σ²_j`. The energy is the negative log density of these
//! coordinates, including the log-scale change-of-variables terms.
//!
//! Prior structure:
//!   β ~ N(0, λ̃²τ²),  λ̃ = cλ / sqrt(c² + τ²λ²)
//!   λ ~ C⁺(0, 1),  τ ~ C⁺(0, τ₀),  c² ~ Inv-Gamma(ν/2, νs²/2)
//!   log σ²_j ~ N(μ_σ, s_σ²)

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::features::{CandidateLibrary, Dataset};
use crate::identify::SupportMask;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub type CoefficientMatrix = DMatrix<f64>;

/// Fixed constants of the prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HorseshoePrior {
    /// Slab degrees of freedom ν.
    pub nu: f64,
    /// Slab scale s.
    pub slab_scale: f64,
    /// Global scale τ₀.
    pub global_scale: f64,
    /// Mean of the normal prior on `log σ²`.
    pub noise_log_mean: f64,
    /// Standard deviation of the normal prior on `log σ²`.
    pub noise_log_std: f64,
}

impl Default for HorseshoePrior {
    fn default() -> Self {
        Self { nu: 4.0, slab_scale: 2.0, global_scale: 0.1, noise_log_mean: 0.0, noise_log_std: 1.0 }
    }
}

impl HorseshoePrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.slab_scale > 0.0 && self.global_scale > 0.0 && self.noise_log_std > 0.0) {
            return Err(Error::Configuration(format!("prior constants must be positive: {self:?}")));
        }
        Ok(())
    }

    fn slab_shape(&self) -> f64 {
        self.nu / 2.0
    }

    fn slab_rate(&self) -> f64 {
        self.nu * self.slab_scale * self.slab_scale / 2.0
    }

    /// Median of the Inv-Gamma slab prior on c².
    pub fn slab_median(&self) -> f64 {
        use statrs::distribution::{ContinuousCDF, InverseGamma};
        InverseGamma::new(self.slab_shape(), self.slab_rate())
            .map(|d| d.inverse_cdf(0.5))
            .unwrap_or(self.slab_scale * self.slab_scale)
    }
}

/// Horseshoe hyperparameters on the log scale.
#[derive(Clone, Debug, PartialEq)]
pub struct HorseshoeHyper {
    pub log_lambda: DMatrix<f64>,
    pub log_tau: f64,
    pub log_c2: f64,
    pub prior: HorseshoePrior,
}

/// `λ̃ = cλ / sqrt(c² + τ²λ²)`.
pub fn regularized_local_scale(lambda: f64, tau: f64, c: f64) -> f64 {
    // Written as 1/sqrt(1/λ² + τ²/c²) to stay finite for extreme λ.
    1.0 / (1.0 / (lambda * lambda) + tau * tau / (c * c)).sqrt()
}

impl HorseshoeHyper {
    /// Hyperparameters at the prior medians (λ = 1, τ = τ₀, c² = median).
    pub fn at_prior_median(m: usize, d: usize, prior: HorseshoePrior) -> Self {
        Self {
            log_lambda: DMatrix::zeros(m, d),
            log_tau: prior.global_scale.ln(),
            log_c2: prior.slab_median().ln(),
            prior,
        }
    }

    /// Elementwise prior standard deviation `λ̃·τ` of each coefficient.
    pub fn effective_scale(&self) -> DMatrix<f64> {
        let tau = self.log_tau.exp();
        let c = (0.5 * self.log_c2).exp();
        self.log_lambda.map(|l| regularized_local_scale(l.exp(), tau, c) * tau)
    }
}

pub fn effective_scale(hyper: &HorseshoeHyper) -> DMatrix<f64> {
    hyper.effective_scale()
}

/// Full sampler state.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerState {
    pub coefficients: CoefficientMatrix,
    pub hyper: HorseshoeHyper,
    pub noise_log_sigma2: Vec<f64>,
}

/// Gradient of the energy with respect to every state block.
#[derive(Clone, Debug, PartialEq)]
pub struct StateGradient {
    pub coefficients: DMatrix<f64>,
    pub log_lambda: DMatrix<f64>,
    pub log_tau: f64,
    pub log_c2: f64,
    pub noise_log_sigma2: Vec<f64>,
}

/// Rows entering the likelihood term.
#[derive(Clone, Copy, Debug)]
pub enum Batch<'a> {
    Full,
    Rows(&'a [usize]),
}

impl Batch<'_> {
    pub fn len(&self, n: usize) -> usize {
        match self {
            Batch::Full => n,
            Batch::Rows(r) => r.len(),
        }
    }

    pub fn is_empty(&self, n: usize) -> bool {
        self.len(n) == 0
    }
}

/// Energy/gradient evaluator bound to a dataset, library and support mask.
#[derive(Clone, Debug)]
pub struct Posterior<'a> {
    theta: &'a DMatrix<f64>,
    targets: &'a DMatrix<f64>,
    theta_rows: Vec<f64>,
    mask: SupportMask,
    prior: HorseshoePrior,
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
    target_sq: Vec<f64>,
}

/// Per-entry prior quantities shared by energy and gradient.
struct EntryPrior {
    inv_s2: f64,
    half_log_s2: f64,
    q: f64,
    lambda2_tau2_inv: f64,
}

fn entry_prior(log_lambda: f64, log_tau: f64, log_c2: f64) -> EntryPrior {
    let a = 2.0 * (log_lambda + log_tau);
    // log(c² + λ²τ²) via log-sum-exp.
    let hi = a.max(log_c2);
    let lse = hi + ((a - hi).exp() + (log_c2 - hi).exp()).ln();
    let log_s2 = log_c2 + a - lse;
    let lambda2_tau2_inv = (-a).exp();
    EntryPrior {
        inv_s2: lambda2_tau2_inv + (-log_c2).exp(),
        half_log_s2: 0.5 * log_s2,
        q: (a - lse).exp(),
        lambda2_tau2_inv,
    }
}

fn softplus_ratio(x: f64) -> f64 {
    // 2e^{2x}/(1+e^{2x}) written stably.
    if x > 0.0 {
        2.0 / (1.0 + (-2.0 * x).exp())
    } else {
        let e = (2.0 * x).exp();
        2.0 * e / (1.0 + e)
    }
}

fn ln1p_exp(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

impl<'a> Posterior<'a> {
    pub fn new(
        library: &'a CandidateLibrary,
        dataset: &'a Dataset,
        mask: &SupportMask,
        prior: HorseshoePrior,
    ) -> Result<Self> {
        Self::from_parts(&library.theta, dataset.require_derivatives()?, mask, prior)
    }

    pub fn from_parts(
        theta: &'a DMatrix<f64>,
        targets: &'a DMatrix<f64>,
        mask: &SupportMask,
        prior: HorseshoePrior,
    ) -> Result<Self> {
        prior.validate()?;
        if theta.nrows() != targets.nrows() {
            return Err(Error::arg(format!("library has {} rows but targets have {}", theta.nrows(), targets.nrows())));
        }
        if theta.nrows() == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if mask.n_basis() != theta.ncols() || mask.dims() != targets.ncols() {
            return Err(Error::arg(format!(
                "mask is {}x{} but problem is {}x{}",
                mask.n_basis(),
                mask.dims(),
                theta.ncols(),
                targets.ncols()
            )));
        }
        if theta.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::arg("library or targets contain non-finite values"));
        }
        let (n, m) = theta.shape();
        let mut theta_rows = vec![0.0; n * m];
        for i in 0..n {
            for k in 0..m {
                theta_rows[i * m + k] = theta[(i, k)];
            }
        }
        let gram = theta.transpose() * theta;
        let cross = theta.transpose() * targets;
        let target_sq = targets.column_iter().map(|c| c.norm_squared()).collect();
        Ok(Self { theta, targets, theta_rows, mask: mask.clone(), prior, gram, cross, target_sq })
    }

    pub fn n_rows(&self) -> usize {
        self.theta.nrows()
    }

    pub fn n_basis(&self) -> usize {
        self.theta.ncols()
    }

    pub fn dims(&self) -> usize {
        self.targets.ncols()
    }

    pub fn mask(&self) -> &SupportMask {
        &self.mask
    }

    pub fn prior(&self) -> &HorseshoePrior {
        &self.prior
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    fn check_batch(&self, batch: Batch) -> Result<()> {
        match batch {
            Batch::Rows([]) => Err(Error::arg("empty mini-batch")),
            Batch::Rows(rows) if rows.iter().any(|&r| r >= self.n_rows()) => {
                Err(Error::arg("mini-batch row out of range"))
            }
            _ => Ok(()),
        }
    }

    /// Residual sums of squares per dimension on the batch, scaled by
    /// `N/|B|`, with the masked coefficients treated as zero. When `grad` is
    /// given it receives `N/|B| · Θ_Bᵀ(Θ_B β − y_B)` per dimension.
    fn scaled_residuals(&self, coefs: &DMatrix<f64>, batch: Batch, mut grad: Option<&mut DMatrix<f64>>) -> Vec<f64> {
        let (n, m) = self.theta.shape();
        let d = self.dims();
        match batch {
            Batch::Full => (0..d)
                .map(|j| {
                    let active = self.mask.active_in_dim(j);
                    let beta = DVector::from_iterator(active.len(), active.iter().map(|&i| coefs[(i, j)]));
                    let mut gb = DVector::zeros(active.len());
                    for (a, &ia) in active.iter().enumerate() {
                        gb[a] = active.iter().enumerate().map(|(b, &ib)| self.gram[(ia, ib)] * beta[b]).sum();
                    }
                    let bc: f64 = active.iter().enumerate().map(|(a, &ia)| beta[a] * self.cross[(ia, j)]).sum();
                    if let Some(g) = grad.as_deref_mut() {
                        for (a, &ia) in active.iter().enumerate() {
                            g[(ia, j)] = gb[a] - self.cross[(ia, j)];
                        }
                    }
                    (self.target_sq[j] - 2.0 * bc + beta.dot(&gb)).max(0.0)
                })
                .collect(),
            Batch::Rows(rows) => {
                let w = n as f64 / rows.len() as f64;
                let mut rss = vec![0.0; d];
                let actives: Vec<Vec<usize>> = (0..d).map(|j| self.mask.active_in_dim(j)).collect();
                if let Some(g) = grad.as_deref_mut() {
                    g.fill(0.0);
                }
                for &r in rows {
                    let row = &self.theta_rows[r * m..(r + 1) * m];
                    for j in 0..d {
                        let pred: f64 = actives[j].iter().map(|&i| row[i] * coefs[(i, j)]).sum();
                        let res = pred - self.targets[(r, j)];
                        rss[j] += res * res;
                        if let Some(g) = grad.as_deref_mut() {
                            for &i in &actives[j] {
                                g[(i, j)] += w * row[i] * res;
                            }
                        }
                    }
                }
                rss.iter_mut().for_each(|v| *v *= w);
                rss
            }
        }
    }

    /// Negative log prior of the state (coefficient prior on active entries
    /// plus all hyperpriors), including Jacobians of the log coordinates.
    pub fn prior_energy(&self, state: &SamplerState) -> f64 {
        let h = &state.hyper;
        let mut e = 0.0;
        for (i, j) in self.mask.active_entries() {
            let ll = h.log_lambda[(i, j)];
            let p = entry_prior(ll, h.log_tau, h.log_c2);
            let beta = state.coefficients[(i, j)];
            e += 0.5 * beta * beta * p.inv_s2 + p.half_log_s2 + 0.5 * LN_2PI;
            e += (std::f64::consts::PI / 2.0).ln() + ln1p_exp(2.0 * ll) - ll;
        }
        e += self.hyper_prior_energy(h.log_tau, h.log_c2);
        let (mu, sd) = (self.prior.noise_log_mean, self.prior.noise_log_std);
        for &v in &state.noise_log_sigma2 {
            e += 0.5 * ((v - mu) / sd).powi(2) + sd.ln() + 0.5 * LN_2PI;
        }
        e
    }

    fn hyper_prior_energy(&self, log_tau: f64, log_c2: f64) -> f64 {
        let tau0 = self.prior.global_scale;
        let (a, b) = (self.prior.slab_shape(), self.prior.slab_rate());
        let tau_term = (std::f64::consts::PI * tau0 / 2.0).ln() + ln1p_exp(2.0 * (log_tau - tau0.ln())) - log_tau;
        let c2_term = -a * b.ln() + ln_gamma(a) + a * log_c2 + b * (-log_c2).exp();
        tau_term + c2_term
    }

    fn likelihood_energy(&self, rss: &[f64], noise_log_sigma2: &[f64]) -> f64 {
        let n = self.n_rows() as f64;
        rss.iter().zip(noise_log_sigma2).map(|(r, &v)| 0.5 * r * (-v).exp() + 0.5 * n * (v + LN_2PI)).sum()
    }

    fn check_state(&self, state: &SamplerState) -> Result<()> {
        let (m, d) = (self.n_basis(), self.dims());
        if state.coefficients.shape() != (m, d)
            || state.hyper.log_lambda.shape() != (m, d)
            || state.noise_log_sigma2.len() != d
        {
            return Err(Error::arg("sampler state does not match the problem dimensions"));
        }
        Ok(())
    }

    /// `−log p(state) − N/|B| Σ_{i∈B} log p(u̇_i | state)`.
    pub fn energy(&self, state: &SamplerState, batch: Batch) -> Result<f64> {
        self.check_batch(batch)?;
        self.check_state(state)?;
        let rss = self.scaled_residuals(&state.coefficients, batch, None);
        Ok(self.likelihood_energy(&rss, &state.noise_log_sigma2) + self.prior_energy(state))
    }

    /// Energy and its gradient. Entries outside the mask have zero gradient.
    pub fn grad_energy(&self, state: &SamplerState, batch: Batch) -> Result<(f64, StateGradient)> {
        self.check_batch(batch)?;
        self.check_state(state)?;
        let (m, d) = (self.n_basis(), self.dims());
        let n = self.n_rows() as f64;
        let mut g_beta = DMatrix::zeros(m, d);
        let rss = self.scaled_residuals(&state.coefficients, batch, Some(&mut g_beta));
        let mut energy = self.likelihood_energy(&rss, &state.noise_log_sigma2);
        let mut g_v = vec![0.0; d];
        for j in 0..d {
            let inv = (-state.noise_log_sigma2[j]).exp();
            for i in 0..m {
                g_beta[(i, j)] *= inv;
            }
            g_v[j] = -0.5 * rss[j] * inv + 0.5 * n;
        }

        let h = &state.hyper;
        let mut g_lambda = DMatrix::zeros(m, d);
        let mut g_tau = 0.0;
        let mut g_c2 = 0.0;
        for (i, j) in self.mask.active_entries() {
            let ll = h.log_lambda[(i, j)];
            let p = entry_prior(ll, h.log_tau, h.log_c2);
            let beta = state.coefficients[(i, j)];
            energy += 0.5 * beta * beta * p.inv_s2 + p.half_log_s2 + 0.5 * LN_2PI;
            energy += (std::f64::consts::PI / 2.0).ln() + ln1p_exp(2.0 * ll) - ll;
            g_beta[(i, j)] += beta * p.inv_s2;
            let shared = -beta * beta * p.lambda2_tau2_inv + (1.0 - p.q);
            g_lambda[(i, j)] = shared + softplus_ratio(ll) - 1.0;
            g_tau += shared;
            g_c2 += -0.5 * beta * beta * (-h.log_c2).exp() + 0.5 * p.q;
        }
        energy += self.hyper_prior_energy(h.log_tau, h.log_c2);
        let tau0 = self.prior.global_scale;
        g_tau += softplus_ratio(h.log_tau - tau0.ln()) - 1.0;
        g_c2 += self.prior.slab_shape() - self.prior.slab_rate() * (-h.log_c2).exp();

        let (mu, sd) = (self.prior.noise_log_mean, self.prior.noise_log_std);
        for (j, &v) in state.noise_log_sigma2.iter().enumerate() {
            energy += 0.5 * ((v - mu) / sd).powi(2) + sd.ln() + 0.5 * LN_2PI;
            g_v[j] += (v - mu) / (sd * sd);
        }
        Ok((
            energy,
            StateGradient {
                coefficients: g_beta,
                log_lambda: g_lambda,
                log_tau: g_tau,
                log_c2: g_c2,
                noise_log_sigma2: g_v,
            },
        ))
    }

    /// Precision of the coefficients of dimension `j` conditional on the
    /// hyperparameters: `Θ_Sᵀ Θ_S / σ_j² + diag(1/(λ̃τ)²)` over the active set `S`.
    pub fn conditional_precision(&self, state: &SamplerState, j: usize) -> DMatrix<f64> {
        let active = self.mask.active_in_dim(j);
        let inv = (-state.noise_log_sigma2[j]).exp();
        let h = &state.hyper;
        DMatrix::from_fn(active.len(), active.len(), |a, b| {
            let mut v = self.gram[(active[a], active[b])] * inv;
            if a == b {
                v += entry_prior(h.log_lambda[(active[a], j)], h.log_tau, h.log_c2).inv_s2;
            }
            v
        })
    }

    /// Ridge solution restricted to the mask, plus per-dimension residual
    /// variances of that fit.
    pub fn ridge_solution(&self, ridge: f64) -> (CoefficientMatrix, Vec<f64>) {
        let (m, d) = (self.n_basis(), self.dims());
        let n = self.n_rows() as f64;
        let mut coefs = DMatrix::zeros(m, d);
        let mut variances = vec![0.0; d];
        for j in 0..d {
            let active = self.mask.active_in_dim(j);
            if !active.is_empty() {
                let k = active.len();
                let scale = (0..k).map(|a| self.gram[(active[a], active[a])]).fold(0.0, f64::max).max(1.0);
                let a_mat = DMatrix::from_fn(k, k, |a, b| {
                    self.gram[(active[a], active[b])] + if a == b { ridge * scale } else { 0.0 }
                });
                let rhs = DVector::from_iterator(k, active.iter().map(|&i| self.cross[(i, j)]));
                let sol = a_mat
                    .clone()
                    .cholesky()
                    .map(|c| c.solve(&rhs))
                    .or_else(|| a_mat.lu().solve(&rhs))
                    .unwrap_or_else(|| DVector::zeros(k));
                for (a, &i) in active.iter().enumerate() {
                    coefs[(i, j)] = sol[a];
                }
            }
            let rss = self.scaled_residuals(&coefs, Batch::Full, None)[j];
            // Exact fits would start the noise variance at zero.
            variances[j] = (rss / n).max(1e-10 * self.target_sq[j] / n).max(1e-300);
        }
        (coefs, variances)
    }

    /// Starting state: ridge coefficients on the mask; hyperparameters at
    /// the prior medians except where the data would put the first steps far
    /// out of range (noise variance from the ridge residuals, local scales
    /// no smaller than `|β|/τ`, slab variance no smaller than `max β²`).
    pub fn initial_state(&self, ridge: f64) -> SamplerState {
        let (coefs, variances) = self.ridge_solution(ridge);
        let (m, d) = (self.n_basis(), self.dims());
        let mut hyper = HorseshoeHyper::at_prior_median(m, d, self.prior);
        let tau = hyper.log_tau.exp();
        let mut max_b2 = 0.0f64;
        for (i, j) in self.mask.active_entries() {
            let b = coefs[(i, j)].abs();
            max_b2 = max_b2.max(b * b);
            hyper.log_lambda[(i, j)] = (b / tau).max(1.0).ln();
        }
        hyper.log_c2 = hyper.log_c2.max(max_b2.ln());
        SamplerState { coefficients: coefs, hyper, noise_log_sigma2: variances.iter().map(|v| v.ln()).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn problem(seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = DMatrix::from_fn(40, 6, |_, _| rng.sample::<f64, _>(StandardNormal));
        let truth = DMatrix::from_row_slice(6, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, -1.5, 0.0, 0.0, -0.1, 0.075, 0.0, 0.0]);
        let noise = DMatrix::from_fn(40, 2, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal));
        (theta.clone(), theta * truth + noise)
    }

    fn random_state(rng: &mut ChaCha8Rng, mask: &SupportMask) -> SamplerState {
        let mut n = || rng.sample::<f64, _>(StandardNormal);
        let mut coefs = DMatrix::from_fn(6, 2, |_, _| n());
        let log_lambda = DMatrix::from_fn(6, 2, |_, _| n());
        for i in 0..6 {
            for j in 0..2 {
                if !mask.is_active(i, j) {
                    coefs[(i, j)] = 0.0;
                }
            }
        }
        SamplerState {
            coefficients: coefs,
            hyper: HorseshoeHyper {
                log_lambda,
                log_tau: n() - 1.0,
                log_c2: n() + 1.0,
                prior: HorseshoePrior::default(),
            },
            noise_log_sigma2: vec![n() - 2.0, n() - 2.0],
        }
    }

    #[test]
    fn effective_scale_limits() {
        let small = regularized_local_scale(1e-3, 0.1, 1.0);
        assert!((small - 1e-3).abs() / 1e-3 < 1e-6);
        let large = regularized_local_scale(1e3, 1.0, 2.0);
        assert!((large - 2.0).abs() / 2.0 < 1e-5);
        assert!((regularized_local_scale(1.0, 1.0, 1.0) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn half_batches_reweighted_match_full_batch() {
        let (theta, y) = problem(1);
        let mask = SupportMask::full(6, 2);
        let post = Posterior::from_parts(&theta, &y, &mask, HorseshoePrior::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let state = random_state(&mut rng, &mask);
        let full = post.energy(&state, Batch::Full).unwrap();
        let first: Vec<usize> = (0..20).collect();
        let second: Vec<usize> = (20..40).collect();
        let halves = 0.5 * post.energy(&state, Batch::Rows(&first)).unwrap()
            + 0.5 * post.energy(&state, Batch::Rows(&second)).unwrap();
        assert!((full - halves).abs() <= 1e-10 * full.abs().max(1.0), "{full} vs {halves}");
        let all: Vec<usize> = (0..40).collect();
        let direct = post.energy(&state, Batch::Rows(&all)).unwrap();
        assert!((full - direct).abs() <= 1e-10 * full.abs().max(1.0));
    }

    #[test]
    fn empty_batch_is_rejected() {
        let (theta, y) = problem(1);
        let mask = SupportMask::full(6, 2);
        let post = Posterior::from_parts(&theta, &y, &mask, HorseshoePrior::default()).unwrap();
        let state = post.initial_state(1e-6);
        assert!(matches!(post.energy(&state, Batch::Rows(&[])), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn masked_entries_have_zero_gradient() {
        let (theta, y) = problem(3);
        let mut mask = SupportMask::full(6, 2);
        mask.set(0, 0, false);
        mask.set(4, 1, false);
        let post = Posterior::from_parts(&theta, &y, &mask, HorseshoePrior::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let state = random_state(&mut rng, &mask);
        let (_, g) = post.grad_energy(&state, Batch::Full).unwrap();
        assert_eq!(g.coefficients[(0, 0)], 0.0);
        assert_eq!(g.coefficients[(4, 1)], 0.0);
        assert_eq!(g.log_lambda[(0, 0)], 0.0);
        assert_eq!(g.log_lambda[(4, 1)], 0.0);
    }

    #[test]
    fn gradient_matches_energy_for_every_block() {
        let (theta, y) = problem(5);
        let mut mask = SupportMask::full(6, 2);
        mask.set(5, 0, false);
        let post = Posterior::from_parts(&theta, &y, &mask, HorseshoePrior::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let batch: Vec<usize> = (0..40).step_by(3).collect();
        for b in [Batch::Full, Batch::Rows(&batch)] {
            let state = random_state(&mut rng, &mask);
            let (e, g) = post.grad_energy(&state, b).unwrap();
            assert!((e - post.energy(&state, b).unwrap()).abs() < 1e-9 * e.abs());
            let h = 1e-6;
            let check = |analytic: f64, perturb: &dyn Fn(&mut SamplerState, f64)| {
                let mut p = state.clone();
                let mut m = state.clone();
                perturb(&mut p, h);
                perturb(&mut m, -h);
                let numeric = (post.energy(&p, b).unwrap() - post.energy(&m, b).unwrap()) / (2.0 * h);
                let rel = (numeric - analytic).abs() / analytic.abs().max(1.0);
                assert!(rel < 1e-5, "analytic {analytic} numeric {numeric}");
            };
            for (i, j) in mask.active_entries() {
                check(g.coefficients[(i, j)], &|s, d| s.coefficients[(i, j)] += d);
                check(g.log_lambda[(i, j)], &|s, d| s.hyper.log_lambda[(i, j)] += d);
            }
            check(g.log_tau, &|s, d| s.hyper.log_tau += d);
            check(g.log_c2, &|s, d| s.hyper.log_c2 += d);
            for j in 0..2 {
                check(g.noise_log_sigma2[j], &|s, d| s.noise_log_sigma2[j] += d);
            }
        }
    }
}
