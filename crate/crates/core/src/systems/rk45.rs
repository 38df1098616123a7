//! Dormand–Prince 5(4) integrator with error-controlled step size and the
//! quartic dense-output interpolant used to sample solutions on a fixed grid.

use nalgebra::DMatrix;

use super::{TimeGrid, Trajectory};
use crate::error::{Error, Result};

/// States whose magnitude exceeds this bound end the integration as diverged.
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e6;

const C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0];
const A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
];
const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
const E: [f64; 7] =
    [-71.0 / 57600.0, 0.0, 71.0 / 16695.0, -71.0 / 1920.0, 17253.0 / 339200.0, -22.0 / 525.0, 1.0 / 40.0];
// Dense output coefficients: y(t + xh) = y + h * sum_k K_k * sum_j P[k][j] x^(j+1).
const P: [[f64; 4]; 7] = [
    [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0],
    [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0],
    [0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0],
    [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0],
    [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0],
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Rk45Options {
    pub rtol: f64,
    pub atol: f64,
    pub divergence_bound: f64,
    pub max_steps: usize,
}

impl Default for Rk45Options {
    fn default() -> Self {
        Self { rtol: 1e-3, atol: 1e-6, divergence_bound: DEFAULT_DIVERGENCE_BOUND, max_steps: 5_000_000 }
    }
}

impl Rk45Options {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }
}

fn rms(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    (v.map(|x| x * x).sum::<f64>() / n as f64).sqrt()
}

/// Integrates `dy/dt = rhs(t, y)` from `ic` at the first grid time and
/// samples the solution at every grid time.
///
/// If the state leaves the divergence bound (or the step size collapses)
/// the returned trajectory holds only the samples reached so far and is
/// flagged `diverged`.
pub fn integrate_rk45<F>(mut rhs: F, ic: &[f64], grid: &TimeGrid, opts: &Rk45Options) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if grid.is_empty() {
        return Err(Error::arg("empty time grid"));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::arg("tolerances must be positive"));
    }
    let d = ic.len();
    if d == 0 {
        return Err(Error::arg("empty initial state"));
    }
    if ic.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("initial state is not finite"));
    }
    let times = grid.times();
    let n_out = times.len();
    let mut out = DMatrix::<f64>::zeros(n_out, d);
    for (j, &v) in ic.iter().enumerate() {
        out[(0, j)] = v;
    }

    let mut t = times[0];
    let t_end = times[n_out - 1];
    let mut y = ic.to_vec();
    let mut k = vec![vec![0.0; d]; 7];
    rhs(t, &y, &mut k[0]);
    if k[0].iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidModel("right-hand side is not finite at the initial state".into()));
    }
    let mut next_out = 1;
    if n_out == 1 {
        return Ok(Trajectory { grid: grid.clone(), states: out, diverged: false });
    }

    let mut h = initial_step(&mut rhs, t, &y, &k[0], t_end - t, opts);
    let mut y_new = vec![0.0; d];
    let mut y_stage = vec![0.0; d];
    let mut err = vec![0.0; d];
    let mut steps = 0usize;
    let mut diverged = false;

    'outer: while next_out < n_out {
        let mut rejected = false;
        loop {
            steps += 1;
            if steps > opts.max_steps || h < 1e-14 * t.abs().max(1.0) {
                diverged = true;
                break 'outer;
            }
            let h_eff = h.min(t_end - t);
            for s in 1..6 {
                for i in 0..d {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += A[s][j] * kj[i];
                    }
                    y_stage[i] = y[i] + h_eff * acc;
                }
                rhs(t + C[s] * h_eff, &y_stage, &mut k[s]);
            }
            for i in 0..d {
                let mut acc = 0.0;
                for s in 0..6 {
                    acc += B[s] * k[s][i];
                }
                y_new[i] = y[i] + h_eff * acc;
            }
            rhs(t + h_eff, &y_new, &mut k[6]);
            for i in 0..d {
                let mut acc = 0.0;
                for s in 0..7 {
                    acc += E[s] * k[s][i];
                }
                err[i] = h_eff * acc;
            }
            let norm = rms((0..d).map(|i| err[i] / (opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs()))), d);
            if !norm.is_finite() {
                h *= MIN_FACTOR;
                rejected = true;
                continue;
            }
            if norm <= 1.0 {
                let mut factor = if norm == 0.0 { MAX_FACTOR } else { (SAFETY * norm.powf(-0.2)).min(MAX_FACTOR) };
                if rejected {
                    factor = factor.min(1.0);
                }
                let t_new = if h_eff >= t_end - t { t_end } else { t + h_eff };
                // Dense output onto every grid time inside (t, t_new].
                while next_out < n_out && times[next_out] <= t_new {
                    let x = if h_eff > 0.0 { (times[next_out] - t) / h_eff } else { 1.0 };
                    let powers = [x, x * x, x * x * x, x * x * x * x];
                    for i in 0..d {
                        let mut acc = 0.0;
                        for (s, ks) in k.iter().enumerate() {
                            let q =
                                P[s][0] * powers[0] + P[s][1] * powers[1] + P[s][2] * powers[2] + P[s][3] * powers[3];
                            acc += ks[i] * q;
                        }
                        out[(next_out, i)] = y[i] + h_eff * acc;
                    }
                    if (0..d).any(|i| {
                        let v = out[(next_out, i)];
                        !v.is_finite() || v.abs() > opts.divergence_bound
                    }) {
                        diverged = true;
                        break 'outer;
                    }
                    next_out += 1;
                }
                if y_new.iter().any(|v| !v.is_finite() || v.abs() > opts.divergence_bound) {
                    diverged = true;
                    break 'outer;
                }
                t = t_new;
                y.copy_from_slice(&y_new);
                k.swap(0, 6);
                h = h_eff * factor;
                break;
            }
            h = h_eff * (SAFETY * norm.powf(-0.2)).max(MIN_FACTOR);
            rejected = true;
        }
    }

    if diverged {
        let keep = next_out;
        let states = out.rows(0, keep).into_owned();
        return Ok(Trajectory { grid: grid.truncated(keep), states, diverged: true });
    }
    Ok(Trajectory { grid: grid.clone(), states: out, diverged: false })
}

fn initial_step<F>(rhs: &mut F, t0: f64, y0: &[f64], f0: &[f64], span: f64, opts: &Rk45Options) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let d = y0.len();
    let scale: Vec<f64> = y0.iter().map(|y| opts.atol + y.abs() * opts.rtol).collect();
    let d0 = rms((0..d).map(|i| y0[i] / scale[i]), d);
    let d1 = rms((0..d).map(|i| f0[i] / scale[i]), d);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1: Vec<f64> = (0..d).map(|i| y0[i] + h0 * f0[i]).collect();
    let mut f1 = vec![0.0; d];
    rhs(t0 + h0, &y1, &mut f1);
    let d2 = rms((0..d).map(|i| (f1[i] - f0[i]) / scale[i]), d) / h0;
    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    let h = (100.0 * h0).min(h1).min(span);
    if h.is_finite() && h > 0.0 {
        h
    } else {
        span.min(1e-6)
    }
}
