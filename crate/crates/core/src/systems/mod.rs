//! Reference data generation: grids, the adaptive integrator, the four
//! benchmark systems and noise injection.

mod benchmarks;
mod convection;
mod noise;
mod rk45;
mod spectral;

pub use benchmarks::{simulate_lorenz, simulate_lotka_volterra, Lorenz, LotkaVolterra};
pub use convection::{solve_convection_diffusion_analytic, GaussianPulse};
pub use noise::{add_noise_matrix, AddNoise, NoiseModel};
pub use rk45::{integrate_rk45, Rk45Options, DEFAULT_DIVERGENCE_BOUND};
pub use spectral::{burgers_benchmark_grids, simulate_burgers_spectral, simulate_burgers_spectral_with, SpectralPde};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted sampling times, uniform or irregular.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    step: Option<f64>,
}

impl TimeGrid {
    /// `n` points starting at `t0` spaced by `dt`.
    pub fn uniform(t0: f64, dt: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::arg(format!("time grid needs at least 2 points, got {n}")));
        }
        if !(dt > 0.0 && dt.is_finite() && t0.is_finite()) {
            return Err(Error::arg(format!("time step must be positive and finite, got {dt}")));
        }
        let times = (0..n).map(|i| t0 + i as f64 * dt).collect();
        Ok(Self { times, step: Some(dt) })
    }

    /// `n` equally spaced points covering `[t0, t1]` inclusive.
    pub fn linspace(t0: f64, t1: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::arg(format!("time grid needs at least 2 points, got {n}")));
        }
        if !(t1 > t0) {
            return Err(Error::arg(format!("empty time span [{t0}, {t1}]")));
        }
        let dt = (t1 - t0) / (n - 1) as f64;
        let mut grid = Self::uniform(t0, dt, n)?;
        grid.times[n - 1] = t1;
        Ok(grid)
    }

    /// Irregular grid from explicit, strictly increasing times.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::arg(format!("time grid needs at least 2 points, got {}", times.len())));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::arg("time grid contains non-finite values"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::arg("time grid must be strictly increasing"));
        }
        Ok(Self { times, step: None })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Uniform spacing, if the grid was built as uniform.
    pub fn step(&self) -> Option<f64> {
        self.step
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// First `n` points. May leave fewer than two points; only used for
    /// truncated (diverged) outputs.
    pub(crate) fn truncated(&self, n: usize) -> Self {
        Self { times: self.times[..n.min(self.times.len())].to_vec(), step: self.step }
    }

    /// Sub-grid made of the given (sorted) indices.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::from_times(indices.iter().map(|&i| self.times[i]).collect())
    }
}

/// Uniform 1-D spatial grid, endpoints included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl SpaceGrid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::arg(format!("invalid spatial domain [{x_min}, {x_max}]")));
        }
        if n < 3 {
            return Err(Error::InsufficientData { needed: 3, got: n });
        }
        Ok(Self { x_min, x_max, n })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n).map(|i| self.x_min + i as f64 * dx).collect()
    }
}

/// Sampled ODE solution. `states` is N×d with one row per grid time.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: DMatrix<f64>,
    /// Set when integration stopped early because the state left the
    /// divergence bound; `grid` and `states` then cover the finite prefix.
    pub diverged: bool,
}

impl Trajectory {
    pub fn dims(&self) -> usize {
        self.states.ncols()
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    /// Rows `[start, end)` as a new trajectory on the matching sub-grid.
    pub fn slice(&self, start: usize, end: usize) -> Result<Trajectory> {
        if end > self.len() || end < start + 2 {
            return Err(Error::arg(format!("invalid trajectory slice {start}..{end}")));
        }
        let indices: Vec<usize> = (start..end).collect();
        let grid = match self.grid.step() {
            Some(dt) => TimeGrid::uniform(self.grid.times()[start], dt, end - start)?,
            None => self.grid.select(&indices)?,
        };
        Ok(Trajectory { grid, states: self.states.rows(start, end - start).into_owned(), diverged: self.diverged })
    }
}

/// Space-time field with `values[(i_t, i_x)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub space: SpaceGrid,
    pub time: TimeGrid,
    pub values: DMatrix<f64>,
    pub diverged: bool,
}

impl Field {
    /// Periodic trapezoid integral `dx * sum(u)` of each stored time row.
    pub fn mass(&self) -> Vec<f64> {
        let dx = self.space.dx();
        self.values.row_iter().map(|r| r.sum() * dx).collect()
    }
}
