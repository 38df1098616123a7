//! Langevin-type samplers: SGLD, MALA, cyclical SGLD and replica-exchange SGLD.
//!
//! Every method runs on a [`LangevinTarget`], whose coordinates are split into
//! blocks updated in turn. Each block step is preconditioned by a metric that
//! may depend on the coordinates outside the block, which keeps Metropolis
//! corrections exact when they are switched on.

mod exchange;
mod langevin;
mod target;

use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use exchange::{resgld_step, swap_accepted, swap_rate, ExchangeOutcome, VarianceWindow};
pub use langevin::{cyclical_step_size, mala_step, sgld_step, MalaOutcome, Metric};
pub use target::{Draw, PosteriorSamples, PosteriorTarget};

use crate::error::{Error, Result};
use crate::posterior::{Batch, Posterior, SamplerState};
use crate::seed::{derive, rng_from_seed, Rng as ChainRng};

/// Rows above which the likelihood is estimated on mini-batches by default.
pub const FULL_BATCH_LIMIT: usize = 2000;
/// Default mini-batch size once the data exceed [`FULL_BATCH_LIMIT`].
pub const DEFAULT_BATCH_SIZE: usize = 256;

/// A differentiable energy `E(x)` whose data term can be sub-sampled.
pub trait LangevinTarget {
    fn dim(&self) -> usize;

    /// Number of data rows available for mini-batching; 0 if there is no data term.
    fn n_data(&self) -> usize;

    /// Coordinate blocks updated in sequence.
    fn blocks(&self) -> Vec<Range<usize>> {
        std::iter::once(0..self.dim()).collect()
    }

    fn energy(&self, x: &[f64], batch: Batch) -> Result<f64>;

    /// Writes `∇E(x)` into `grad` and returns `E(x)`.
    fn energy_grad(&self, x: &[f64], batch: Batch, grad: &mut [f64]) -> Result<f64>;

    /// Proposal metric for `block`. It must not depend on the coordinates
    /// inside the block.
    fn metric(&self, _block: usize, _x: &[f64]) -> Result<Metric> {
        Ok(Metric::Identity)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sgld,
    Mala,
    Cyclical,
    Resgld,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Sgld, Method::Mala, Method::Cyclical, Method::Resgld];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Sgld => "sgld",
            Method::Mala => "mala",
            Method::Cyclical => "cyclical",
            Method::Resgld => "resgld",
        }
    }

    /// Whether a Metropolis correction is applied unless configured otherwise.
    pub fn adjusted_by_default(&self) -> bool {
        matches!(self, Method::Mala)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Configuration(format!("unknown sampler method '{s}'")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub method: Method,
    /// Total iterations `K`.
    pub iterations: usize,
    /// Step size `η` (or `η₀` for the cyclical schedule). `None` calibrates
    /// it with a short Metropolis-adjusted pilot run.
    pub step_size: Option<f64>,
    /// Upper bound on a calibrated step for unadjusted methods.
    pub max_unadjusted_step: f64,
    /// Acceptance rate targeted by the calibration.
    pub target_acceptance: f64,
    pub burn_in_fraction: f64,
    pub thin: usize,
    /// Temperatures of the low- and high-temperature chains.
    pub temperatures: [f64; 2],
    /// Number of cycles `M` of the cyclical schedule.
    pub cycles: usize,
    /// Mini-batch size; `None` uses the full data up to [`FULL_BATCH_LIMIT`]
    /// rows and [`DEFAULT_BATCH_SIZE`] beyond.
    pub batch_size: Option<usize>,
    /// Swap-correction constant `C` dividing the energy-difference variance.
    /// The correction is applied only with mini-batch energies.
    pub swap_correction: f64,
    /// Window length `W` of the energy-difference variance estimate.
    pub variance_window: usize,
    /// Metropolis correction; `None` follows [`Method::adjusted_by_default`].
    pub mh_adjust: Option<bool>,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            method: Method::Resgld,
            iterations: 4000,
            step_size: None,
            max_unadjusted_step: 0.1,
            target_acceptance: 0.57,
            burn_in_fraction: 0.5,
            thin: 1,
            temperatures: [1.0, 10.0],
            cycles: 4,
            batch_size: None,
            swap_correction: 1.0,
            variance_window: 100,
            mh_adjust: None,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn with_method(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Configuration(msg));
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if let Some(eta) = self.step_size {
            if !(eta > 0.0 && eta.is_finite()) {
                return bad(format!("step size must be positive, got {eta}"));
            }
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return bad(format!("burn-in fraction must lie in [0, 1), got {}", self.burn_in_fraction));
        }
        if self.thin == 0 {
            return bad("thinning must be at least 1".into());
        }
        let [t1, t2] = self.temperatures;
        if !(t1 > 0.0 && t2 > 0.0) {
            return bad("temperatures must be positive".into());
        }
        if self.method == Method::Resgld && t2 <= t1 {
            return bad(format!("high temperature {t2} must exceed low temperature {t1}"));
        }
        if self.method == Method::Cyclical && (self.cycles == 0 || self.cycles > self.iterations) {
            return bad(format!("{} cycles do not fit in {} iterations", self.cycles, self.iterations));
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be positive".into());
        }
        if !(self.swap_correction > 0.0) {
            return bad("swap correction must be positive".into());
        }
        if !(self.max_unadjusted_step > 0.0) || !(0.0 < self.target_acceptance && self.target_acceptance < 1.0) {
            return bad("invalid step calibration settings".into());
        }
        Ok(())
    }

    pub fn mh_enabled(&self) -> bool {
        self.mh_adjust.unwrap_or_else(|| self.method.adjusted_by_default())
    }

    pub fn burn_in(&self) -> usize {
        (self.iterations as f64 * self.burn_in_fraction).floor() as usize
    }

    /// Mini-batch size for `n` rows; `None` means full batch. Metropolis
    /// corrections always use exact energies.
    pub fn effective_batch(&self, n: usize) -> Option<usize> {
        if self.mh_enabled() || n == 0 {
            return None;
        }
        let b = match self.batch_size {
            Some(b) => b,
            None if n > FULL_BATCH_LIMIT => DEFAULT_BATCH_SIZE,
            None => return None,
        };
        (b < n).then_some(b)
    }
}

/// Run summary.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub method: Option<Method>,
    pub step_size: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub batch_size: Option<usize>,
    pub mh_adjusted: bool,
    /// Fraction of accepted block proposals when Metropolis-adjusted.
    pub acceptance_rate: Option<f64>,
    pub swap_attempts: usize,
    pub swap_accepts: usize,
    /// Energy of the (low-temperature) chain before each iteration.
    pub energy_trace: Vec<f64>,
}

/// Flat draws from a generic run.
#[derive(Clone, Debug)]
pub struct ChainOutput {
    pub draws: Vec<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

struct Chain {
    x: Vec<f64>,
    temperature: f64,
}

struct Stepper<'t, T: LangevinTarget + ?Sized> {
    target: &'t T,
    blocks: Vec<Range<usize>>,
    mh: bool,
    proposals: usize,
    accepts: usize,
}

impl<T: LangevinTarget + ?Sized> Stepper<'_, T> {
    /// Updates every block of `chain` once and returns the energy seen
    /// before the first block move.
    fn sweep(
        &mut self,
        chain: &mut Chain,
        eta: f64,
        batch: Batch,
        rng: &mut ChainRng,
        iteration: usize,
    ) -> Result<f64> {
        let fail = |reason: String| Error::ChainFailure { iteration, reason };
        let mut grad = vec![0.0; chain.x.len()];
        let mut first_energy = None;
        for (b, range) in self.blocks.iter().enumerate() {
            if range.is_empty() {
                continue;
            }
            let energy = self.target.energy_grad(&chain.x, batch, &mut grad)?;
            if !energy.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(fail("non-finite energy or gradient".into()));
            }
            first_energy.get_or_insert(energy);
            let metric = self.target.metric(b, &chain.x)?;
            let xb = &chain.x[range.clone()];
            let gb = &grad[range.clone()];
            let new_block = if self.mh {
                let target = self.target;
                let mut full = chain.x.clone();
                let mut full_grad = vec![0.0; full.len()];
                let r = range.clone();
                let eg = |y: &[f64], g: &mut [f64]| {
                    full[r.clone()].copy_from_slice(y);
                    let e = target.energy_grad(&full, batch, &mut full_grad)?;
                    g.copy_from_slice(&full_grad[r.clone()]);
                    Ok(e)
                };
                let out = mala_step(xb, energy, gb, eta, chain.temperature, &metric, eg, rng)
                    .map_err(|e| relabel(e, iteration))?;
                self.proposals += 1;
                self.accepts += out.accepted as usize;
                out.state
            } else {
                sgld_step(xb, eta, chain.temperature, gb, &metric, rng).map_err(|e| relabel(e, iteration))?
            };
            if new_block.iter().any(|v| !v.is_finite()) {
                return Err(fail("non-finite state".into()));
            }
            chain.x[range.clone()].copy_from_slice(&new_block);
        }
        match first_energy {
            Some(e) => Ok(e),
            None => self.target.energy(&chain.x, batch),
        }
    }
}

fn relabel(err: Error, iteration: usize) -> Error {
    match err {
        Error::ChainFailure { reason, .. } => Error::ChainFailure { iteration, reason },
        other => other,
    }
}

fn draw_batch(rng: &mut ChainRng, n: usize, size: Option<usize>, buf: &mut Vec<usize>) -> bool {
    match size {
        Some(b) => {
            *buf = rand::seq::index::sample(rng, n, b).into_vec();
            true
        }
        None => false,
    }
}

/// Runs the configured method from `init` with step `eta` and returns the
/// post-burn-in, thinned draws of the low-temperature chain.
pub fn run_langevin<T: LangevinTarget + ?Sized>(
    target: &T,
    config: &ChainConfig,
    init: &[f64],
    eta: f64,
) -> Result<ChainOutput> {
    config.validate()?;
    if init.len() != target.dim() {
        return Err(Error::arg(format!("initial state has length {}, target has {}", init.len(), target.dim())));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("initial state is not finite"));
    }
    let n = target.n_data();
    let batch_size = config.effective_batch(n);
    let mut rng = rng_from_seed(derive(config.seed, "chain"));
    let mut stepper = Stepper { target, blocks: target.blocks(), mh: config.mh_enabled(), proposals: 0, accepts: 0 };
    let [t1, t2] = config.temperatures;
    let mut cold = Chain { x: init.to_vec(), temperature: if config.method == Method::Resgld { t1 } else { 1.0 } };
    let mut hot = Chain { x: init.to_vec(), temperature: t2 };
    let mut window = VarianceWindow::new(config.variance_window);
    let burn_in = config.burn_in();
    let mut draws = Vec::with_capacity((config.iterations - burn_in) / config.thin + 1);
    let mut diagnostics = Diagnostics {
        method: Some(config.method),
        step_size: eta,
        iterations: config.iterations,
        burn_in,
        batch_size,
        mh_adjusted: stepper.mh,
        ..Diagnostics::default()
    };
    let mut rows = Vec::new();
    for k in 1..=config.iterations {
        let step = match config.method {
            Method::Cyclical => cyclical_step_size(k, eta, config.cycles, config.iterations)?,
            _ => eta,
        };
        let batch = if draw_batch(&mut rng, n, batch_size, &mut rows) { Batch::Rows(&rows) } else { Batch::Full };
        let e = stepper.sweep(&mut cold, step, batch, &mut rng, k)?;
        diagnostics.energy_trace.push(e);
        if config.method == Method::Resgld {
            stepper.sweep(&mut hot, step, batch, &mut rng, k)?;
            let l1 = target.energy(&cold.x, batch)?;
            let l2 = target.energy(&hot.x, batch)?;
            window.push(l1 - l2);
            diagnostics.swap_attempts += 1;
            // Exact energies need no correction.
            let variance = if batch_size.is_some() { window.variance() } else { 0.0 };
            let swap = swap_accepted(l1, l2, (t1, t2), variance, config.swap_correction, &mut rng)
                .map_err(|e| relabel(e, k))?;
            if swap {
                std::mem::swap(&mut cold.x, &mut hot.x);
                diagnostics.swap_accepts += 1;
            }
        }
        if k > burn_in && (k - burn_in - 1).is_multiple_of(config.thin) {
            draws.push(cold.x.clone());
        }
    }
    if stepper.mh {
        diagnostics.acceptance_rate = Some(stepper.accepts as f64 / stepper.proposals.max(1) as f64);
    }
    Ok(ChainOutput { draws, diagnostics })
}

/// Chooses a step size with Metropolis-adjusted pilot runs, adapting it
/// until the acceptance rate is near `target_acceptance`.
pub fn calibrate_step_size<T: LangevinTarget + ?Sized>(
    target: &T,
    init: &[f64],
    target_acceptance: f64,
    seed: u64,
) -> Result<f64> {
    let mut eta: f64 = 0.1;
    let mut x = init.to_vec();
    let pilot = ChainConfig { method: Method::Mala, iterations: 100, burn_in_fraction: 0.0, ..ChainConfig::default() };
    for round in 0..12 {
        let cfg = ChainConfig { seed: derive(seed, &format!("calibrate-{round}")), ..pilot.clone() };
        let out = run_langevin(target, &cfg, &x, eta)?;
        if let Some(last) = out.draws.last() {
            x.clone_from(last);
        }
        let acc = out.diagnostics.acceptance_rate.unwrap_or(0.0);
        eta = (eta * (3.0 * (acc - target_acceptance)).exp()).clamp(1e-8, 2.0);
    }
    Ok(eta)
}

/// Largest calibrated step for an unadjusted run. Mini-batch gradient noise
/// inflates the stationary variance by roughly `η(N/B)/2`; the cap keeps
/// that near 10%.
pub fn unadjusted_step_cap(config: &ChainConfig, n: usize) -> f64 {
    match config.effective_batch(n) {
        Some(b) => config.max_unadjusted_step.min(0.2 * b as f64 / n as f64),
        None => config.max_unadjusted_step,
    }
}

/// Step size used for a run: the configured value, or a calibrated one
/// (capped for unadjusted methods).
pub fn resolve_step_size<T: LangevinTarget + ?Sized>(target: &T, config: &ChainConfig, init: &[f64]) -> Result<f64> {
    match config.step_size {
        Some(eta) => Ok(eta),
        None => {
            let eta = calibrate_step_size(target, init, config.target_acceptance, derive(config.seed, "calibrate"))?;
            Ok(if config.mh_enabled() { eta } else { eta.min(unadjusted_step_cap(config, target.n_data())) })
        }
    }
}

/// Samples the posterior over library coefficients from `init`.
pub fn run_chain(config: &ChainConfig, posterior: &Posterior, init: &SamplerState) -> Result<PosteriorSamples> {
    let target = PosteriorTarget::new(posterior, init)?;
    let x0 = target.flatten(init);
    let eta = resolve_step_size(&target, config, &x0)?;
    let out = run_langevin(&target, config, &x0, eta)?;
    let draws: Vec<Draw> = out.draws.iter().map(|x| target.draw(x)).collect();
    if draws.is_empty() {
        return Err(Error::Configuration("no draws retained after burn-in".into()));
    }
    Ok(PosteriorSamples { draws, diagnostics: out.diagnostics })
}
