//! Pseudo-spectral method of lines for periodic 1-D PDEs of the form
//! `u_t = Σ ξ_k · u^a u_x^b u_xx^c`.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{integrate_rk45, Field, Rk45Options, SpaceGrid, TimeGrid};
use crate::error::{Error, Result};

/// Right-hand side built from monomials in `(u, u_x, u_xx)`.
///
/// Spatial derivatives are spectral on the periodic extension of the grid
/// (period `n·dx`). Terms of total degree ≥ 2 are dealiased with the 2/3 rule.
#[derive(Clone)]
pub struct SpectralPde {
    n: usize,
    x0: f64,
    period: f64,
    wavenumbers: Vec<f64>,
    keep: Vec<bool>,
    linear: Vec<([u32; 3], f64)>,
    nonlinear: Vec<([u32; 3], f64)>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralPde {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPde")
            .field("n", &self.n)
            .field("linear", &self.linear)
            .field("nonlinear", &self.nonlinear)
            .finish()
    }
}

impl SpectralPde {
    pub fn new(space: &SpaceGrid, terms: &[([u32; 3], f64)]) -> Self {
        let n = space.n;
        let period = n as f64 * space.dx();
        let base = 2.0 * std::f64::consts::PI / period;
        let signed = |j: usize| if j < n.div_ceil(2) { j as f64 } else { j as f64 - n as f64 };
        let wavenumbers = (0..n).map(|j| base * signed(j)).collect();
        let cutoff = n as f64 / 3.0;
        let keep = (0..n).map(|j| signed(j).abs() <= cutoff).collect();
        let mut planner = FftPlanner::new();
        let (linear, nonlinear) =
            terms.iter().filter(|(_, c)| *c != 0.0).partition(|(e, _)| e.iter().sum::<u32>() <= 1);
        Self {
            n,
            x0: space.x_min,
            period,
            wavenumbers,
            keep,
            linear,
            nonlinear,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    /// Viscous Burgers `u_t = −u u_x + ν u_xx`.
    pub fn burgers(space: &SpaceGrid, nu: f64) -> Self {
        Self::new(space, &[([0, 0, 1], nu), ([1, 1, 0], -1.0)])
    }

    /// Spectral first and second derivatives of `u`.
    pub fn derivatives(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut hat: Vec<Complex<f64>> = u.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.forward.process(&mut hat);
        let nyquist = if n.is_multiple_of(2) { Some(n / 2) } else { None };
        let mut dx: Vec<Complex<f64>> =
            hat.iter()
                .enumerate()
                .map(|(j, h)| {
                    if Some(j) == nyquist {
                        Complex::new(0.0, 0.0)
                    } else {
                        h * Complex::new(0.0, self.wavenumbers[j])
                    }
                })
                .collect();
        let mut dxx: Vec<Complex<f64>> =
            hat.iter().enumerate().map(|(j, h)| h * (-self.wavenumbers[j] * self.wavenumbers[j])).collect();
        self.inverse.process(&mut dx);
        self.inverse.process(&mut dxx);
        let scale = 1.0 / n as f64;
        (dx.iter().map(|c| c.re * scale).collect(), dxx.iter().map(|c| c.re * scale).collect())
    }

    /// Evaluates the trigonometric interpolant of grid values `u` at `points`.
    pub fn interpolate(&self, u: &[f64], points: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut hat: Vec<Complex<f64>> = u.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.forward.process(&mut hat);
        let nyquist = if n.is_multiple_of(2) { Some(n / 2) } else { None };
        let base = 2.0 * std::f64::consts::PI / self.period;
        points
            .iter()
            .map(|&x| {
                let phase = base * (x - self.x0);
                let mut acc = hat[0].re;
                for (j, h) in hat.iter().enumerate().take(n.div_ceil(2)).skip(1) {
                    let (s, c) = (phase * j as f64).sin_cos();
                    acc += 2.0 * (h.re * c - h.im * s);
                }
                if let Some(k) = nyquist {
                    acc += hat[k].re * (phase * k as f64).cos();
                }
                acc / n as f64
            })
            .collect()
    }

    fn dealias(&self, v: &mut [f64]) {
        let mut hat: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.forward.process(&mut hat);
        for (h, &k) in hat.iter_mut().zip(&self.keep) {
            if !k {
                *h = Complex::new(0.0, 0.0);
            }
        }
        self.inverse.process(&mut hat);
        let scale = 1.0 / self.n as f64;
        for (x, h) in v.iter_mut().zip(&hat) {
            *x = h.re * scale;
        }
    }

    pub fn rhs(&self, u: &[f64], du: &mut [f64]) {
        let (ux, uxx) = self.derivatives(u);
        let monomial =
            |e: &[u32; 3], i: usize| u[i].powi(e[0] as i32) * ux[i].powi(e[1] as i32) * uxx[i].powi(e[2] as i32);
        for (i, out) in du.iter_mut().enumerate() {
            *out = self.linear.iter().map(|(e, c)| c * monomial(e, i)).sum();
        }
        if !self.nonlinear.is_empty() {
            let mut nl: Vec<f64> =
                (0..self.n).map(|i| self.nonlinear.iter().map(|(e, c)| c * monomial(e, i)).sum()).collect();
            self.dealias(&mut nl);
            for (out, v) in du.iter_mut().zip(nl) {
                *out += v;
            }
        }
    }

    /// Integrates from `u0` sampled on the space grid.
    pub fn solve(&self, space: &SpaceGrid, time: &TimeGrid, u0: &[f64], opts: &Rk45Options) -> Result<Field> {
        let traj = integrate_rk45(|_, u, du| self.rhs(u, du), u0, time, opts)?;
        Ok(Field { space: space.clone(), time: traj.grid, values: traj.states, diverged: traj.diverged })
    }
}

pub fn simulate_burgers_spectral<F: Fn(f64) -> f64>(
    nu: f64,
    space: &SpaceGrid,
    time: &TimeGrid,
    ic: F,
) -> Result<Field> {
    simulate_burgers_spectral_with(nu, space, time, ic, &Rk45Options::default())
}

pub fn simulate_burgers_spectral_with<F: Fn(f64) -> f64>(
    nu: f64,
    space: &SpaceGrid,
    time: &TimeGrid,
    ic: F,
    opts: &Rk45Options,
) -> Result<Field> {
    if !(nu >= 0.0) {
        return Err(Error::arg(format!("viscosity must be non-negative, got {nu}")));
    }
    let u0: Vec<f64> = space.points().into_iter().map(ic).collect();
    SpectralPde::burgers(space, nu).solve(space, time, &u0, opts)
}

/// Field at the benchmark configuration: ν=0.1, 256 points on [−8, 8],
/// 101 times on [0, 10], Gaussian bump centred at 3.
pub fn burgers_benchmark_grids() -> (SpaceGrid, TimeGrid) {
    (SpaceGrid::new(-8.0, 8.0, 256).unwrap(), TimeGrid::linspace(0.0, 10.0, 101).unwrap())
}
