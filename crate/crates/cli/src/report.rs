//! Merges model reports into one coefficient table per system: one row per
//! basis and state, one column per run, followed by metric rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sysid::io::{fmt_float, read_json, write_string, ModelReport};

use crate::{CliError, Common};

fn find_models(dir: &Path, found: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            find_models(&path, found)?;
        } else if path.file_name().is_some_and(|n| n == "model.json") {
            found.push(path);
        }
    }
    Ok(())
}

/// Column labels: the method, qualified by the run directory when a method repeats.
fn labels(runs: &[(PathBuf, ModelReport)]) -> Vec<String> {
    runs.iter()
        .map(|(path, r)| {
            let repeated = runs.iter().filter(|(_, o)| o.method == r.method).count() > 1;
            match path.parent().and_then(|p| p.file_name()) {
                Some(dir) if repeated => format!("{} ({})", r.method, dir.to_string_lossy()),
                _ => r.method.clone(),
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt_float)
}

fn quote(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn table(runs: &[(PathBuf, ModelReport)]) -> String {
    let mut rows: Vec<(String, usize)> = Vec::new();
    for (_, r) in runs {
        for basis in &r.basis {
            for dim in 0..r.state_names.len() {
                if !rows.iter().any(|(b, d)| b == basis && *d == dim) {
                    rows.push((basis.clone(), dim));
                }
            }
        }
    }
    rows.sort_by_key(|(_, d)| *d);
    let state = |dim: usize| runs.iter().find_map(|(_, r)| r.state_names.get(dim).cloned()).unwrap_or_default();
    let mut out = String::from("basis,state");
    for label in labels(runs) {
        out.push(',');
        out.push_str(&quote(&label));
    }
    out.push('\n');
    for (basis, dim) in &rows {
        let _ = write!(out, "{},{}", quote(basis), quote(&state(*dim)));
        for (_, r) in runs {
            let cell = r
                .basis
                .iter()
                .position(|b| b == basis)
                .and_then(|i| r.coefficients[i].get(*dim))
                .filter(|c| c.active)
                .map_or_else(String::new, |c| fmt_float(c.mode));
            out.push(',');
            out.push_str(&cell);
        }
        out.push('\n');
    }
    type Cell = fn(&ModelReport) -> String;
    let metrics: [(&str, Cell); 5] = [
        ("error_bar", |r| opt(r.metrics.error_bar)),
        ("mse", |r| opt(r.metrics.mse)),
        ("mse_out_of_sample", |r| opt(r.metrics.mse_out_of_sample)),
        ("aic", |r| opt(r.metrics.aic)),
        ("k_active", |r| r.metrics.k_active.to_string()),
    ];
    for (name, value) in metrics {
        let _ = write!(out, "{name},");
        for (_, r) in runs {
            out.push(',');
            out.push_str(&value(r));
        }
        out.push('\n');
    }
    out
}

pub fn run(common: &Common) -> Result<(), CliError> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
    let mut paths = Vec::new();
    if dir.is_dir() {
        find_models(&dir, &mut paths).map_err(|e| CliError::data(format!("cannot scan {}: {e}", dir.display())))?;
    }
    if paths.is_empty() {
        return Err(CliError::data(format!("empty report: no model.json found under {}", dir.display())));
    }
    let mut groups: BTreeMap<String, Vec<(PathBuf, ModelReport)>> = BTreeMap::new();
    for path in paths {
        let report: ModelReport = read_json(&path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        groups.entry(report.system.clone()).or_default().push((path, report));
    }
    for (system, runs) in &groups {
        let text = table(runs);
        let path = dir.join(format!("report_{system}.csv"));
        write_string(&path, &text).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        if !common.quiet {
            println!("# {system}\n{text}");
        }
    }
    Ok(())
}
