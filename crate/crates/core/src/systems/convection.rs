use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Field, SpaceGrid, TimeGrid};
use crate::error::{Error, Result};

/// Gaussian initial profile `A·exp(−(x − μ)² / (2 s²))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPulse {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl Default for GaussianPulse {
    fn default() -> Self {
        Self { amplitude: 1.0, center: 5.0, width: 1.0 }
    }
}

/// Closed-form solution of `u_t + c u_x − D u_xx = 0` on the whole line for
/// a Gaussian pulse: the pulse translates with speed `c` while its variance
/// grows as `s² + 2Dt` and its height falls to preserve mass.
pub fn solve_convection_diffusion_analytic(
    velocity: f64,
    diffusivity: f64,
    space: &SpaceGrid,
    time: &TimeGrid,
    pulse: GaussianPulse,
) -> Result<Field> {
    if !(diffusivity > 0.0) {
        return Err(Error::arg(format!("diffusivity must be positive, got {diffusivity}")));
    }
    if !(pulse.width > 0.0) {
        return Err(Error::arg(format!("pulse width must be positive, got {}", pulse.width)));
    }
    let xs = space.points();
    let ts = time.times();
    let s2 = pulse.width * pulse.width;
    let values = DMatrix::from_fn(ts.len(), xs.len(), |i, j| {
        let t = ts[i] - ts[0];
        let var = s2 + 2.0 * diffusivity * t;
        let shift = xs[j] - pulse.center - velocity * t;
        pulse.amplitude * pulse.width / var.sqrt() * (-shift * shift / (2.0 * var)).exp()
    });
    Ok(Field { space: space.clone(), time: time.clone(), values, diverged: false })
}
