//! CSV and JSON artifacts. Floats are written with 17 significant digits
//! and Unix newlines so that reruns diff byte-for-byte.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::active::{RoundSummary, SelectionRecord};
use crate::error::{Error, Result};
use crate::evaluate::{CredibleBand, SweepPoint};
use crate::features::{BasisSet, CandidateLibrary};
use crate::identify::{FitProvenance, IdentifiedModel, SupportMask};
use crate::samplers::{Diagnostics, PosteriorSamples};
use crate::systems::{Field, SpaceGrid, TimeGrid, Trajectory};

/// Shortest exact rendering with 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt_float)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Numeric CSV body with its header.
#[derive(Clone, Debug, PartialEq)]
pub struct NumericTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Parses a header line followed by numeric rows. Errors carry the 1-based line number.
pub fn parse_numeric_csv(text: &str) -> Result<NumericTable> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or(Error::Parse { line: 1, message: "missing header".into() })?;
    let header: Vec<String> = head.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} fields, found {}", header.len(), fields.len()),
            });
        }
        let row = fields
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse { line: line_no, message: format!("'{}' is not a number", f.trim()) })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(NumericTable { header, rows })
}

pub fn read_numeric_csv(path: &Path) -> Result<NumericTable> {
    parse_numeric_csv(&fs::read_to_string(path)?)
}

fn matrix_csv(header: &[String], first: &[f64], m: &DMatrix<f64>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for (i, t) in first.iter().enumerate() {
        out.push_str(&fmt_float(*t));
        for j in 0..m.ncols() {
            out.push(',');
            out.push_str(&fmt_float(m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// `t,x1,...,xd`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut header = vec!["t".to_string()];
    header.extend((1..=traj.dims()).map(|j| format!("x{j}")));
    matrix_csv(&header, traj.grid.times(), &traj.states)
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    write_text(path, &trajectory_csv(traj))
}

pub fn parse_trajectory_csv(text: &str) -> Result<Trajectory> {
    let table = parse_numeric_csv(text)?;
    if table.header.first().map(String::as_str) != Some("t") || table.header.len() < 2 {
        return Err(Error::Parse { line: 1, message: "trajectory header must be t,x1,...,xd".into() });
    }
    let n = table.rows.len();
    let d = table.header.len() - 1;
    let times: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
    let grid = TimeGrid::from_times(times).map_err(|e| Error::Parse { line: 2, message: e.to_string() })?;
    let states = DMatrix::from_fn(n, d, |i, j| table.rows[i][j + 1]);
    Ok(Trajectory { grid, states, diverged: false })
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    parse_trajectory_csv(&fs::read_to_string(path)?)
}

/// Long format `t,x,u`, ordered by time then position.
pub fn field_csv(field: &Field) -> String {
    let xs = field.space.points();
    let mut out = String::from("t,x,u\n");
    for (i, t) in field.time.times().iter().enumerate() {
        for (j, x) in xs.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", fmt_float(*t), fmt_float(*x), fmt_float(field.values[(i, j)]));
        }
    }
    out
}

pub fn write_field_csv(path: &Path, field: &Field) -> Result<()> {
    write_text(path, &field_csv(field))
}

pub fn parse_field_csv(text: &str) -> Result<Field> {
    let table = parse_numeric_csv(text)?;
    if table.header != ["t", "x", "u"] {
        return Err(Error::Parse { line: 1, message: "field header must be t,x,u".into() });
    }
    let first_t = table.rows.first().ok_or(Error::Parse { line: 2, message: "no rows".into() })?[0];
    let nx = table.rows.iter().take_while(|r| r[0] == first_t).count();
    if nx < 3 || table.rows.len() % nx != 0 {
        return Err(Error::Parse { line: 2, message: "field rows do not form a time × space grid".into() });
    }
    let nt = table.rows.len() / nx;
    let xs: Vec<f64> = table.rows[..nx].iter().map(|r| r[1]).collect();
    for (k, r) in table.rows.iter().enumerate() {
        let (i, j) = (k / nx, k % nx);
        if r[1] != xs[j] || r[0] != table.rows[i * nx][0] {
            return Err(Error::Parse { line: k + 2, message: "field rows do not form a time × space grid".into() });
        }
    }
    let times: Vec<f64> = (0..nt).map(|i| table.rows[i * nx][0]).collect();
    let space = SpaceGrid::new(xs[0], xs[nx - 1], nx).map_err(|e| Error::Parse { line: 2, message: e.to_string() })?;
    let time = TimeGrid::from_times(times).map_err(|e| Error::Parse { line: 2, message: e.to_string() })?;
    let values = DMatrix::from_fn(nt, nx, |i, j| table.rows[i * nx + j][2]);
    Ok(Field { space, time, values, diverged: false })
}

pub fn read_field_csv(path: &Path) -> Result<Field> {
    parse_field_csv(&fs::read_to_string(path)?)
}

/// Feature matrix with descriptor names as header.
pub fn theta_csv(library: &CandidateLibrary) -> String {
    let mut out = library.basis.names().join(",");
    out.push('\n');
    for row in library.theta.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| fmt_float(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub name: String,
    pub exponents: Vec<u32>,
}

pub fn library_manifest(basis: &BasisSet) -> Vec<LibraryEntry> {
    basis.descriptors.iter().map(|d| LibraryEntry { name: d.name.clone(), exponents: d.exponents.clone() }).collect()
}

/// `draw_index,basis_name,state_dim,value` for every active entry of every draw.
pub fn samples_csv(samples: &PosteriorSamples, mask: &SupportMask, names: &[String]) -> String {
    let mut out = String::from("draw_index,basis_name,state_dim,value\n");
    let entries = mask.active_entries();
    for (k, d) in samples.draws.iter().enumerate() {
        for &(i, j) in &entries {
            let _ = writeln!(out, "{k},{},{j},{}", names[i], fmt_float(d.coefficients[(i, j)]));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub method: Option<String>,
    pub step_size: f64,
    pub acceptance_rate: Option<f64>,
    pub swap_attempts: usize,
    pub swap_accepts: usize,
    pub energy_trace_path: String,
}

impl DiagnosticsReport {
    pub fn new(d: &Diagnostics, energy_trace_path: &str) -> Self {
        Self {
            method: d.method.map(|m| m.name().to_string()),
            step_size: d.step_size,
            acceptance_rate: d.acceptance_rate,
            swap_attempts: d.swap_attempts,
            swap_accepts: d.swap_accepts,
            energy_trace_path: energy_trace_path.to_string(),
        }
    }
}

pub fn energy_trace_csv(d: &Diagnostics) -> String {
    let mut out = String::from("iteration,energy\n");
    for (k, e) in d.energy_trace.iter().enumerate() {
        let _ = writeln!(out, "{},{}", k + 1, fmt_float(*e));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub mode: f64,
    pub std: f64,
    pub active: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetrics {
    pub error_bar: Option<f64>,
    pub mse: Option<f64>,
    pub mse_out_of_sample: Option<f64>,
    pub aic: Option<f64>,
    pub k_active: usize,
}

/// Serializable model summary in table layout: one row per basis, one
/// column per state dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub system: String,
    pub method: String,
    pub threshold: f64,
    pub seed: u64,
    pub basis: Vec<String>,
    pub state_names: Vec<String>,
    pub coefficients: Vec<Vec<CoefficientReport>>,
    pub metrics: ReportMetrics,
    pub converged: bool,
    pub rounds: usize,
    pub unidentifiable: Vec<usize>,
    pub provenance: FitProvenance,
}

impl ModelReport {
    pub fn from_model(model: &IdentifiedModel, system: &str, state_names: Vec<String>) -> Self {
        let d = model.mask.dims();
        let mut std = DMatrix::zeros(model.mask.n_basis(), d);
        for s in &model.summary {
            std[(s.basis, s.dim)] = s.std;
        }
        let coefficients = (0..model.mask.n_basis())
            .map(|i| {
                (0..d)
                    .map(|j| CoefficientReport {
                        mode: model.modes[(i, j)],
                        std: std[(i, j)],
                        active: model.mask.is_active(i, j),
                    })
                    .collect()
            })
            .collect();
        Self {
            system: system.to_string(),
            method: model.provenance.chain.method.name().to_string(),
            threshold: model.provenance.threshold,
            seed: model.provenance.seed,
            basis: model.basis_names.clone(),
            state_names,
            coefficients,
            metrics: ReportMetrics {
                error_bar: model.metrics.error_bar,
                mse: model.metrics.mse,
                mse_out_of_sample: model.metrics.mse_out_of_sample,
                aic: model.metrics.aic,
                k_active: model.metrics.k_active,
            },
            converged: model.converged,
            rounds: model.rounds(),
            unidentifiable: model.unidentifiable.clone(),
            provenance: model.provenance.clone(),
        }
    }
}

/// `t,dim,lower,median,upper`.
pub fn band_csv(band: &CredibleBand) -> String {
    let mut out = String::from("t,dim,lower,median,upper\n");
    for (i, t) in band.times.iter().enumerate() {
        for j in 0..band.lower.ncols() {
            let _ = writeln!(
                out,
                "{},{j},{},{},{}",
                fmt_float(*t),
                fmt_float(band.lower[(i, j)]),
                fmt_float(band.median[(i, j)]),
                fmt_float(band.upper[(i, j)])
            );
        }
    }
    out
}

/// `threshold,error_bar,k_active`; a missing Error Bar is left empty.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("threshold,error_bar,k_active\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", fmt_float(p.threshold), fmt_opt(p.error_bar), p.k_active);
    }
    out
}

/// `round,pool_index,score_variance,score_distance,score_total,error_bar_after_round`.
pub fn history_csv(history: &[SelectionRecord]) -> String {
    let mut out = String::from("round,pool_index,score_variance,score_distance,score_total,error_bar_after_round\n");
    for r in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.round,
            r.pool_index,
            fmt_float(r.score_variance),
            fmt_float(r.score_distance),
            fmt_float(r.score_total),
            fmt_opt(r.error_bar_after_round)
        );
    }
    out
}

/// `round,n_selected,error_bar,k_active,min_space_filling,max_space_filling`.
pub fn rounds_csv(rounds: &[RoundSummary]) -> String {
    let mut out = String::from("round,n_selected,error_bar,k_active,min_space_filling,max_space_filling\n");
    for r in rounds {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.round,
            r.n_selected,
            fmt_opt(r.error_bar),
            r.k_active,
            fmt_opt(r.min_space_filling),
            fmt_opt(r.max_space_filling)
        );
    }
    out
}

pub fn write_string(path: &Path, text: &str) -> Result<()> {
    write_text(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0] {
            assert_eq!(fmt_float(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn trajectory_round_trip() {
        let grid = TimeGrid::uniform(0.0, 0.5, 3).unwrap();
        let traj = Trajectory {
            grid,
            states: DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            diverged: false,
        };
        let text = trajectory_csv(&traj);
        assert!(text.starts_with("t,x1,x2\n"));
        let back = parse_trajectory_csv(&text).unwrap();
        assert_eq!(back.states, traj.states);
        assert_eq!(back.grid.times(), traj.grid.times());
    }

    #[test]
    fn corrupt_row_names_its_line() {
        let text = "t,x1\n0,1\n0.5,oops\n";
        match parse_trajectory_csv(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse_numeric_csv("t,x1\n0,1,2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn field_round_trip() {
        let space = SpaceGrid::new(0.0, 1.0, 3).unwrap();
        let time = TimeGrid::uniform(0.0, 1.0, 2).unwrap();
        let field = Field {
            space,
            time,
            values: DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            diverged: false,
        };
        let back = parse_field_csv(&field_csv(&field)).unwrap();
        assert_eq!(back.values, field.values);
        assert_eq!(back.space, field.space);
    }
}
