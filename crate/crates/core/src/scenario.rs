//! Benchmark scenarios: reference data, candidate library, ground-truth
//! coefficients and reconstruction metrics for the four test systems, plus
//! the candidate pools of the active-learning experiments.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::active::{pool_from_dataset, Pool, TableOracle};
use crate::error::{Error, Result};
use crate::evaluate::{reconstruct_ode, reconstruct_pde, MetricReport};
use crate::features::{build_library, finite_difference_time, BasisSet, CandidateLibrary, Dataset, LibraryMode};
use crate::identify::{FitConfig, IdentifiedModel, ModelMetrics};
use crate::samplers::ChainConfig;
use crate::seed::{derive, rng_from_seed};
use crate::systems::{
    add_noise_matrix, simulate_burgers_spectral, simulate_lorenz, simulate_lotka_volterra,
    solve_convection_diffusion_analytic, AddNoise, Field, GaussianPulse, Lorenz, LotkaVolterra, NoiseModel,
    Rk45Options, SpaceGrid, SpectralPde, TimeGrid, Trajectory,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LotkaVolterraSpec {
    pub params: LotkaVolterra,
    pub ic: [f64; 2],
    pub dt: f64,
    pub steps: usize,
}

impl Default for LotkaVolterraSpec {
    fn default() -> Self {
        Self { params: LotkaVolterra::default(), ic: [10.0, 5.0], dt: 5e-3, steps: 5000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LorenzSpec {
    pub params: Lorenz,
    pub ic: [f64; 3],
    pub dt: f64,
    /// Simulated steps; rows past `train_steps` are held out.
    pub steps: usize,
    pub train_steps: usize,
}

impl Default for LorenzSpec {
    fn default() -> Self {
        Self { params: Lorenz::default(), ic: [-8.0, 8.0, 27.0], dt: 1e-3, steps: 5500, train_steps: 3000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub t_end: f64,
    pub n_t: usize,
}

impl FieldGrid {
    pub fn grids(&self) -> Result<(SpaceGrid, TimeGrid)> {
        Ok((SpaceGrid::new(self.x_min, self.x_max, self.n_x)?, TimeGrid::linspace(0.0, self.t_end, self.n_t)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BurgersSpec {
    pub viscosity: f64,
    pub grid: FieldGrid,
    /// Initial condition `exp(−(x − center)² / 2)`.
    pub center: f64,
}

impl Default for BurgersSpec {
    fn default() -> Self {
        Self {
            viscosity: 0.1,
            grid: FieldGrid { x_min: -8.0, x_max: 8.0, n_x: 256, t_end: 10.0, n_t: 101 },
            center: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvectionDiffusionSpec {
    pub velocity: f64,
    pub diffusivity: f64,
    pub grid: FieldGrid,
    pub pulse: GaussianPulse,
}

impl Default for ConvectionDiffusionSpec {
    fn default() -> Self {
        Self {
            velocity: 1.0,
            diffusivity: 1.0,
            grid: FieldGrid { x_min: 0.0, x_max: 20.0, n_x: 201, t_end: 5.0, n_t: 501 },
            pulse: GaussianPulse::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemSpec {
    LotkaVolterra(LotkaVolterraSpec),
    Lorenz(LorenzSpec),
    Burgers(BurgersSpec),
    ConvectionDiffusion(ConvectionDiffusionSpec),
}

impl SystemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SystemSpec::LotkaVolterra(_) => "lotka_volterra",
            SystemSpec::Lorenz(_) => "lorenz",
            SystemSpec::Burgers(_) => "burgers",
            SystemSpec::ConvectionDiffusion(_) => "convection_diffusion",
        }
    }

    pub fn library_mode(&self) -> LibraryMode {
        match self {
            SystemSpec::LotkaVolterra(_) | SystemSpec::Lorenz(_) => LibraryMode::Ode,
            _ => LibraryMode::Pde,
        }
    }

    pub fn state_names(&self) -> Vec<String> {
        let names: &[&str] = match self {
            SystemSpec::LotkaVolterra(_) => &["x", "y"],
            SystemSpec::Lorenz(_) => &["x", "y", "z"],
            _ => &["u"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    /// Nonzero true coefficients as `(basis name, state index, value)`.
    pub fn true_terms(&self) -> Vec<(String, usize, f64)> {
        let own = |v: Vec<(&str, usize, f64)>| v.into_iter().map(|(n, d, c)| (n.to_string(), d, c)).collect();
        match self {
            SystemSpec::LotkaVolterra(s) => own(s.params.true_terms()),
            SystemSpec::Lorenz(s) => own(s.params.true_terms()),
            SystemSpec::Burgers(s) => own(vec![("u_xx", 0, s.viscosity), ("uu_x", 0, -1.0)]),
            SystemSpec::ConvectionDiffusion(s) => own(vec![("u_x", 0, -s.velocity), ("u_xx", 0, s.diffusivity)]),
        }
    }
}

/// Measured (noisy or clean) data of a scenario.
#[derive(Clone, Debug)]
pub enum Observations {
    Trajectory(Trajectory),
    Field(Field),
}

/// A benchmark: system, measurement noise and library degree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: SystemSpec,
    pub noise: NoiseModel,
    #[serde(default = "default_degree")]
    pub max_degree: u32,
}

fn default_degree() -> u32 {
    2
}

impl Scenario {
    pub fn lotka_volterra() -> Self {
        Self {
            system: SystemSpec::LotkaVolterra(LotkaVolterraSpec::default()),
            noise: NoiseModel::Gaussian { fraction: 0.05 },
            max_degree: 2,
        }
    }

    pub fn lorenz() -> Self {
        Self {
            system: SystemSpec::Lorenz(LorenzSpec::default()),
            noise: NoiseModel::Gaussian { fraction: 0.05 },
            max_degree: 2,
        }
    }

    pub fn burgers() -> Self {
        Self {
            system: SystemSpec::Burgers(BurgersSpec::default()),
            noise: NoiseModel::Gaussian { fraction: 0.002 },
            max_degree: 2,
        }
    }

    pub fn convection_diffusion() -> Self {
        Self {
            system: SystemSpec::ConvectionDiffusion(ConvectionDiffusionSpec::default()),
            noise: NoiseModel::Gaussian { fraction: 0.001 },
            max_degree: 2,
        }
    }

    /// Fit settings used for the benchmark runs. Iteration counts keep the
    /// Monte Carlo error of the coefficient modes well below the threshold.
    pub fn benchmark_fit(&self, seed: u64) -> FitConfig {
        let (threshold, iterations) = match self.system {
            SystemSpec::LotkaVolterra(_) => (0.05, 40_000),
            SystemSpec::Lorenz(_) => (0.5, 20_000),
            SystemSpec::Burgers(_) => (0.05, 20_000),
            SystemSpec::ConvectionDiffusion(_) => (0.5, 20_000),
        };
        FitConfig {
            chain: ChainConfig { iterations, seed: derive(seed, "fit"), ..ChainConfig::default() },
            threshold,
            ..FitConfig::default()
        }
    }

    /// Simulates clean data and adds noise seeded by `derive(seed, "noise")`.
    pub fn generate(&self, seed: u64) -> Result<ScenarioData> {
        let noise_seed = derive(seed, "noise");
        let opts = Rk45Options::default();
        let (clean, noisy, train) = match &self.system {
            SystemSpec::LotkaVolterra(s) => {
                let grid = TimeGrid::uniform(0.0, s.dt, s.steps)?;
                let clean = simulate_lotka_volterra(&s.params, s.ic, &grid, &opts)?;
                let noisy = clean.add_noise(&self.noise, noise_seed)?;
                (
                    Observations::Trajectory(clean),
                    Observations::Trajectory(noisy.clone()),
                    Observations::Trajectory(noisy),
                )
            }
            SystemSpec::Lorenz(s) => {
                if !(s.train_steps >= 3 && s.train_steps <= s.steps) {
                    return Err(Error::arg(format!("training steps {} outside [3, {}]", s.train_steps, s.steps)));
                }
                let grid = TimeGrid::uniform(0.0, s.dt, s.steps)?;
                let clean = simulate_lorenz(&s.params, s.ic, &grid, &opts)?;
                let noisy = clean.add_noise(&self.noise, noise_seed)?;
                let train = noisy.slice(0, s.train_steps)?;
                (Observations::Trajectory(clean), Observations::Trajectory(noisy), Observations::Trajectory(train))
            }
            SystemSpec::Burgers(s) => {
                let (space, time) = s.grid.grids()?;
                let c = s.center;
                let clean =
                    simulate_burgers_spectral(s.viscosity, &space, &time, |x| (-(x - c) * (x - c) / 2.0).exp())?;
                let noisy = clean.add_noise(&self.noise, noise_seed)?;
                (Observations::Field(clean), Observations::Field(noisy.clone()), Observations::Field(noisy))
            }
            SystemSpec::ConvectionDiffusion(s) => {
                let (space, time) = s.grid.grids()?;
                let clean = solve_convection_diffusion_analytic(s.velocity, s.diffusivity, &space, &time, s.pulse)?;
                let noisy = clean.add_noise(&self.noise, noise_seed)?;
                (Observations::Field(clean), Observations::Field(noisy.clone()), Observations::Field(noisy))
            }
        };
        let dataset = match &train {
            Observations::Trajectory(t) => Dataset::from_trajectory(t)?,
            Observations::Field(f) => Dataset::from_field(f)?,
        };
        let library = build_library(&dataset, self.max_degree, self.system.library_mode())?;
        let truth = truth_matrix(&library.basis, &self.system)?;
        Ok(ScenarioData { system: self.system.clone(), clean, noisy, dataset, library, truth })
    }
}

fn truth_matrix(basis: &BasisSet, system: &SystemSpec) -> Result<DMatrix<f64>> {
    let dims = system.state_names().len();
    let mut truth = DMatrix::zeros(basis.len(), dims);
    for (name, dim, value) in system.true_terms() {
        let i = basis.index_of(&name).ok_or_else(|| Error::arg(format!("true term {name} is not in the library")))?;
        truth[(i, dim)] = value;
    }
    Ok(truth)
}

/// Generated data of a scenario.
#[derive(Clone, Debug)]
pub struct ScenarioData {
    pub system: SystemSpec,
    /// Noise-free simulation over the full horizon.
    pub clean: Observations,
    /// Noisy simulation over the full horizon.
    pub noisy: Observations,
    /// Training rows with finite-difference derivatives.
    pub dataset: Dataset,
    pub library: CandidateLibrary,
    /// True coefficients laid out like the library.
    pub truth: DMatrix<f64>,
}

impl ScenarioData {
    /// Support of the true coefficients.
    pub fn true_support(&self) -> crate::identify::SupportMask {
        let t = &self.truth;
        crate::identify::SupportMask::from_fn(t.nrows(), t.ncols(), |i, j| t[(i, j)] != 0.0)
    }

    /// Largest relative error of the active coefficients against the truth.
    pub fn worst_relative_error(&self, model: &IdentifiedModel) -> f64 {
        self.true_support()
            .active_entries()
            .into_iter()
            .map(|(i, j)| ((model.modes[(i, j)] - self.truth[(i, j)]) / self.truth[(i, j)]).abs())
            .fold(0.0, f64::max)
    }

    /// Reconstructs the model's mode coefficients from the clean initial
    /// state and compares with the clean data. In-sample covers the training
    /// horizon; out-of-sample the held-out remainder, if any. A diverged
    /// reconstruction leaves the metrics empty.
    pub fn metrics(&self, model: &IdentifiedModel) -> Result<ModelMetrics> {
        let k = model.mask.count();
        let mut metrics = ModelMetrics { error_bar: model.metrics.error_bar, k_active: k, ..ModelMetrics::default() };
        let opts = Rk45Options::default();
        match &self.clean {
            Observations::Trajectory(clean) => {
                let train = self.dataset.n_rows();
                let ic: Vec<f64> = clean.states.row(0).iter().copied().collect();
                let recon = match reconstruct_ode(&model.modes, &self.library.basis, &ic, &clean.grid, &opts) {
                    Ok(r) => r,
                    Err(Error::InvalidModel(_)) => return Ok(metrics),
                    Err(e) => return Err(e),
                };
                if recon.diverged || recon.len() < train {
                    return Ok(metrics);
                }
                let truth = clean.states.rows(0, train).into_owned();
                let report =
                    MetricReport::new(metrics.error_bar, &truth, &recon.states.rows(0, train).into_owned(), k)?;
                metrics.mse = Some(report.mse);
                metrics.aic = Some(report.aic);
                if clean.len() > train && recon.len() == clean.len() {
                    let rest = clean.len() - train;
                    let held = clean.states.rows(train, rest).into_owned();
                    let pred = recon.states.rows(train, rest).into_owned();
                    metrics.mse_out_of_sample = Some(MetricReport::new(None, &held, &pred, k)?.mse);
                }
            }
            Observations::Field(clean) => {
                let u0: Vec<f64> = clean.values.row(0).iter().copied().collect();
                let recon =
                    match reconstruct_pde(&model.modes, &self.library.basis, &clean.space, &clean.time, &u0, &opts) {
                        Ok(r) => r,
                        Err(Error::InvalidModel(_)) => return Ok(metrics),
                        Err(e) => return Err(e),
                    };
                if recon.diverged || recon.values.nrows() < clean.values.nrows() {
                    return Ok(metrics);
                }
                let report = MetricReport::new(metrics.error_bar, &clean.values, &recon.values, k)?;
                metrics.mse = Some(report.mse);
                metrics.aic = Some(report.aic);
            }
        }
        Ok(metrics)
    }
}

/// Candidate pool of the Lotka-Volterra active-learning experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LotkaVolterraPoolSpec {
    pub system: LotkaVolterraSpec,
    pub pool_size: usize,
    /// Gaussian noise fraction on the states.
    pub noise: f64,
}

impl Default for LotkaVolterraPoolSpec {
    fn default() -> Self {
        Self {
            system: LotkaVolterraSpec { steps: 50_000, ..LotkaVolterraSpec::default() },
            pool_size: 10_000,
            noise: 0.05,
        }
    }
}

/// Candidate pool of the Burgers active-learning experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BurgersPoolSpec {
    pub system: BurgersSpec,
    /// Points of the fine spatial grid.
    pub fine_points: usize,
    /// Points of the periodic spectral solve.
    pub solver_points: usize,
    /// Time step of the fine grid, used for central differences in time.
    pub dt: f64,
    pub times: Vec<f64>,
    /// Lognormal `(μ, σ)` multiplicative noise on measured `u_t`.
    pub noise: [f64; 2],
}

impl Default for BurgersPoolSpec {
    fn default() -> Self {
        Self {
            system: BurgersSpec::default(),
            fine_points: 4001,
            solver_points: 512,
            dt: 0.01,
            times: vec![1.0, 5.0, 8.0],
            noise: [0.0, 0.1],
        }
    }
}

/// Candidate pool plus the oracle returning its measured derivatives.
pub struct PoolData {
    pub pool: Pool,
    pub oracle: TableOracle,
    /// Noise-free derivative of every pool row.
    pub clean_derivatives: DMatrix<f64>,
    pub truth: DMatrix<f64>,
}

impl LotkaVolterraPoolSpec {
    /// Pool rows are noisy states at distinct random steps. Derivatives are
    /// finite differences of the noisy trajectory on its original regular
    /// grid, taken before subsampling.
    pub fn build(&self, seed: u64) -> Result<PoolData> {
        let s = &self.system;
        if self.pool_size == 0 || self.pool_size > s.steps {
            return Err(Error::arg(format!("pool of {} rows from {} steps", self.pool_size, s.steps)));
        }
        let grid = TimeGrid::uniform(0.0, s.dt, s.steps)?;
        let clean = simulate_lotka_volterra(&s.params, s.ic, &grid, &Rk45Options::default())?;
        let noise = NoiseModel::Gaussian { fraction: self.noise };
        let states = add_noise_matrix(&clean.states, &noise, derive(seed, "noise"), true)?;
        let measured = finite_difference_time(&states, &grid)?;
        let derivatives = finite_difference_time(&clean.states, &grid)?;
        let mut rows = sample(&mut rng_from_seed(derive(seed, "pool")), s.steps, self.pool_size).into_vec();
        rows.sort_unstable();
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)]);
        let pool = pool_from_dataset(Dataset::from_states(pick(&states), None), 2, LibraryMode::Ode)?;
        let truth = truth_matrix(pool.basis(), &SystemSpec::LotkaVolterra(s.clone()))?;
        Ok(PoolData { oracle: TableOracle::new(pick(&measured)), clean_derivatives: pick(&derivatives), pool, truth })
    }
}

impl BurgersPoolSpec {
    /// Solves on a periodic spectral grid, evaluates `u`, `u_x`, `u_xx` on
    /// the fine grid by trigonometric interpolation at each training time,
    /// and takes `u_t` by central differences at `±dt`. The oracle returns
    /// `u_t` times lognormal noise.
    pub fn build(&self, seed: u64) -> Result<PoolData> {
        let s = &self.system;
        let g = &s.grid;
        if self.fine_points < 3 || self.solver_points < 3 || !(self.dt > 0.0) || self.times.is_empty() {
            return Err(Error::arg("invalid fine-grid settings"));
        }
        let period = g.x_max - g.x_min;
        let solver = SpaceGrid::new(g.x_min, g.x_max - period / self.solver_points as f64, self.solver_points)?;
        let mut stamps = Vec::with_capacity(3 * self.times.len() + 1);
        stamps.push(0.0);
        for &t in &self.times {
            if !(t - self.dt > 0.0) {
                return Err(Error::arg(format!("training time {t} leaves no room for a backward difference")));
            }
            stamps.extend([t - self.dt, t, t + self.dt]);
        }
        let mut sorted = stamps.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let time = TimeGrid::from_times(sorted.clone())?;
        let c = s.center;
        let field = simulate_burgers_spectral(s.viscosity, &solver, &time, |x| (-(x - c) * (x - c) / 2.0).exp())?;
        if field.diverged {
            return Err(Error::InvalidModel("reference Burgers solve diverged".into()));
        }
        let pde = SpectralPde::burgers(&solver, s.viscosity);
        let fine = SpaceGrid::new(g.x_min, g.x_max, self.fine_points)?.points();
        let at = |t: f64| -> Vec<f64> {
            let row = sorted.iter().position(|&v| v == t).unwrap_or(0);
            field.values.row(row).iter().copied().collect()
        };
        let n = fine.len() * self.times.len();
        let mut inputs = DMatrix::zeros(n, 1);
        let mut spatial = DMatrix::zeros(n, 2);
        let mut ut = DMatrix::zeros(n, 1);
        let mut coords = Vec::with_capacity(n);
        for (k, &t) in self.times.iter().enumerate() {
            let u = at(t);
            let (ux, uxx) = pde.derivatives(&u);
            let u_f = pde.interpolate(&u, &fine);
            let ux_f = pde.interpolate(&ux, &fine);
            let uxx_f = pde.interpolate(&uxx, &fine);
            let up = pde.interpolate(&at(t + self.dt), &fine);
            let down = pde.interpolate(&at(t - self.dt), &fine);
            for (j, &x) in fine.iter().enumerate() {
                let r = k * fine.len() + j;
                inputs[(r, 0)] = u_f[j];
                spatial[(r, 0)] = ux_f[j];
                spatial[(r, 1)] = uxx_f[j];
                ut[(r, 0)] = (up[j] - down[j]) / (2.0 * self.dt);
                coords.push([x, t]);
            }
        }
        let noise = NoiseModel::LogNormal { mu: self.noise[0], sigma: self.noise[1] };
        let measured = add_noise_matrix(&ut, &noise, derive(seed, "derivative-noise"), false)?;
        let candidates = Dataset {
            inputs,
            spatial: Some(spatial),
            coords: Some(coords),
            derivatives: None,
            provenance: (0..n).map(|index| crate::features::RowSource::Grid { index }).collect(),
        };
        let pool = pool_from_dataset(candidates, 2, LibraryMode::Pde)?;
        let truth = truth_matrix(pool.basis(), &SystemSpec::Burgers(s.clone()))?;
        Ok(PoolData { oracle: TableOracle::new(measured), clean_derivatives: ut, pool, truth })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_matches_library_layout() {
        let data = Scenario::lotka_volterra().generate(0).unwrap();
        assert_eq!(data.truth.shape(), (6, 2));
        assert_eq!(data.true_support().count(), 4);
        let x = data.library.basis.index_of("x").unwrap();
        assert_eq!(data.truth[(x, 0)], 1.0);
        let burgers = Scenario::burgers().generate(0).unwrap();
        assert_eq!(burgers.dataset.n_rows(), 101 * 256);
        assert_eq!(burgers.true_support().count(), 2);
    }

    #[test]
    fn lorenz_trains_on_the_prefix() {
        let data = Scenario::lorenz().generate(1).unwrap();
        assert_eq!(data.dataset.n_rows(), 3000);
        match &data.clean {
            Observations::Trajectory(t) => assert_eq!(t.len(), 5500),
            Observations::Field(_) => panic!("expected a trajectory"),
        }
    }

    #[test]
    fn scenario_parses_with_defaults_and_rejects_typos() {
        let s: Scenario =
            serde_json::from_str(r#"{"system":{"kind":"burgers"},"noise":{"kind":"gaussian","fraction":0.002}}"#)
                .unwrap();
        assert_eq!(s, Scenario::burgers());
        let typo = r#"{"system":{"kind":"burgers","viscosty":0.2},"noise":{"kind":"gaussian","fraction":0.0}}"#;
        assert!(serde_json::from_str::<Scenario>(typo).is_err());
    }

    #[test]
    fn burgers_pool_derivatives_follow_the_equation() {
        let spec = BurgersPoolSpec { fine_points: 401, ..BurgersPoolSpec::default() };
        let data = spec.build(0).unwrap();
        assert_eq!(data.pool.len(), 3 * 401);
        let basis = data.pool.basis();
        let (a, b) = (basis.index_of("u_xx").unwrap(), basis.index_of("uu_x").unwrap());
        let mut worst: f64 = 0.0;
        for r in 0..data.pool.len() {
            let f = data.pool.features(r);
            let rhs = 0.1 * f[a] - f[b];
            worst = worst.max((rhs - data.clean_derivatives[(r, 0)]).abs());
        }
        // Central differences at dt = 0.01 carry an O(dt²) truncation error.
        assert!(worst < 5e-3, "{worst}");
    }
}
