use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::systems::{Field, TimeGrid};

/// Three-point first-derivative weights at `at ∈ {0, 1, 2}` for nodes `t`.
fn lagrange_first(t: [f64; 3], at: usize) -> [f64; 3] {
    let h1 = t[1] - t[0];
    let h2 = t[2] - t[1];
    match at {
        0 => [-(2.0 * h1 + h2) / (h1 * (h1 + h2)), (h1 + h2) / (h1 * h2), -h1 / (h2 * (h1 + h2))],
        1 => [-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))],
        _ => [h2 / (h1 * (h1 + h2)), -(h1 + h2) / (h1 * h2), (2.0 * h2 + h1) / (h2 * (h1 + h2))],
    }
}

/// Time derivative of each column: second-order central differences inside,
/// second-order one-sided three-point stencils at both ends. Irregular grids
/// use the matching three-point Lagrange weights.
pub fn finite_difference_time(states: &DMatrix<f64>, grid: &TimeGrid) -> Result<DMatrix<f64>> {
    let n = states.nrows();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    if grid.len() != n {
        return Err(Error::arg(format!("grid has {} points but data has {n} rows", grid.len())));
    }
    let t = grid.times();
    let mut out = DMatrix::zeros(n, states.ncols());
    if let Some(dt) = grid.step() {
        for j in 0..states.ncols() {
            let f = states.column(j);
            out[(0, j)] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dt);
            for i in 1..n - 1 {
                out[(i, j)] = (f[i + 1] - f[i - 1]) / (2.0 * dt);
            }
            out[(n - 1, j)] = (f[n - 3] - 4.0 * f[n - 2] + 3.0 * f[n - 1]) / (2.0 * dt);
        }
        return Ok(out);
    }
    for i in 0..n {
        let (start, at) = match i {
            0 => (0, 0),
            i if i == n - 1 => (n - 3, 2),
            i => (i - 1, 1),
        };
        let w = lagrange_first([t[start], t[start + 1], t[start + 2]], at);
        for j in 0..states.ncols() {
            out[(i, j)] = (0..3).map(|k| w[k] * states[(start + k, j)]).sum();
        }
    }
    Ok(out)
}

/// First and second spatial derivatives of every time row of a field.
///
/// Interior points use central differences. The boundaries use one-sided
/// second-order stencils (three points for `u_x`, four for `u_xx`, falling
/// back to three points when only three nodes exist).
pub fn finite_difference_space(field: &Field) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let nx = field.values.ncols();
    if nx < 3 {
        return Err(Error::InsufficientData { needed: 3, got: nx });
    }
    let dx = field.space.dx();
    let nt = field.values.nrows();
    let mut ux = DMatrix::zeros(nt, nx);
    let mut uxx = DMatrix::zeros(nt, nx);
    let h2 = dx * dx;
    for i in 0..nt {
        let u = |j: usize| field.values[(i, j)];
        ux[(i, 0)] = (-3.0 * u(0) + 4.0 * u(1) - u(2)) / (2.0 * dx);
        ux[(i, nx - 1)] = (u(nx - 3) - 4.0 * u(nx - 2) + 3.0 * u(nx - 1)) / (2.0 * dx);
        for j in 1..nx - 1 {
            ux[(i, j)] = (u(j + 1) - u(j - 1)) / (2.0 * dx);
            uxx[(i, j)] = (u(j + 1) - 2.0 * u(j) + u(j - 1)) / h2;
        }
        if nx >= 4 {
            uxx[(i, 0)] = (2.0 * u(0) - 5.0 * u(1) + 4.0 * u(2) - u(3)) / h2;
            uxx[(i, nx - 1)] = (2.0 * u(nx - 1) - 5.0 * u(nx - 2) + 4.0 * u(nx - 3) - u(nx - 4)) / h2;
        } else {
            uxx[(i, 0)] = uxx[(i, 1)];
            uxx[(i, nx - 1)] = uxx[(i, 1)];
        }
    }
    Ok((ux, uxx))
}
