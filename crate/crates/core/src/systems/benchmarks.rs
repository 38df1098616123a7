use serde::{Deserialize, Serialize};

use super::{integrate_rk45, Rk45Options, TimeGrid, Trajectory};
use crate::error::Result;

/// Predator–prey system `x' = αx − βxy`, `y' = −δy + γxy`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LotkaVolterra {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub gamma: f64,
}

impl Default for LotkaVolterra {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 0.1, delta: 1.5, gamma: 0.075 }
    }
}

impl LotkaVolterra {
    pub fn rhs(&self, u: &[f64], du: &mut [f64]) {
        let (x, y) = (u[0], u[1]);
        du[0] = self.alpha * x - self.beta * x * y;
        du[1] = -self.delta * y + self.gamma * x * y;
    }

    /// Nonzero coefficients as `(basis name, state index, value)`.
    pub fn true_terms(&self) -> Vec<(&'static str, usize, f64)> {
        vec![("x", 0, self.alpha), ("xy", 0, -self.beta), ("y", 1, -self.delta), ("xy", 1, self.gamma)]
    }
}

/// Lorenz system `x' = σ(y − x)`, `y' = x(ρ − z) − y`, `z' = xy − βz`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lorenz {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for Lorenz {
    fn default() -> Self {
        Self { sigma: 10.0, rho: 28.0, beta: 8.0 / 3.0 }
    }
}

impl Lorenz {
    pub fn rhs(&self, u: &[f64], du: &mut [f64]) {
        let (x, y, z) = (u[0], u[1], u[2]);
        du[0] = self.sigma * (y - x);
        du[1] = x * (self.rho - z) - y;
        du[2] = x * y - self.beta * z;
    }

    pub fn true_terms(&self) -> Vec<(&'static str, usize, f64)> {
        vec![
            ("x", 0, -self.sigma),
            ("y", 0, self.sigma),
            ("x", 1, self.rho),
            ("y", 1, -1.0),
            ("xz", 1, -1.0),
            ("z", 2, -self.beta),
            ("xy", 2, 1.0),
        ]
    }
}

pub fn simulate_lotka_volterra(
    params: &LotkaVolterra,
    ic: [f64; 2],
    grid: &TimeGrid,
    opts: &Rk45Options,
) -> Result<Trajectory> {
    integrate_rk45(|_, u, du| params.rhs(u, du), &ic, grid, opts)
}

pub fn simulate_lorenz(params: &Lorenz, ic: [f64; 3], grid: &TimeGrid, opts: &Rk45Options) -> Result<Trajectory> {
    integrate_rk45(|_, u, du| params.rhs(u, du), &ic, grid, opts)
}
