//! `simulate`, `fit`, `sweep` and `active`.

use std::path::PathBuf;

use nalgebra::DMatrix;
use sysid::active::{active_learning_loop, pool_from_dataset, Pool, TableOracle};
use sysid::evaluate::threshold_sweep;
use sysid::features::{build_library, CandidateLibrary, Dataset, LibraryMode};
use sysid::identify::{fit as fit_model, FitConfig, IdentifiedModel};
use sysid::io::{
    energy_trace_csv, field_csv, history_csv, library_manifest, read_field_csv, read_numeric_csv, read_trajectory_csv,
    rounds_csv, samples_csv, sweep_csv, trajectory_csv, write_json, write_string, DiagnosticsReport, ModelReport,
};
use sysid::scenario::{Observations, ScenarioData};
use sysid::seed::derive;

use crate::config::{DataFormat, ExperimentConfig, ExternalData, ExternalPool, PoolSource, Source};
use crate::manifest::Run;
use crate::{CliError, Common};

/// Space-filling score spread above which a positive density exponent is advised.
const SPREAD_ADVICE: f64 = 1e6;

/// Loads the configuration and applies command-line overrides.
fn setup(command: &'static str, common: &Common) -> Result<Run, CliError> {
    let path = common.config.as_ref().ok_or_else(|| CliError::config("--config is required"))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out = Some(std::path::absolute(out).unwrap_or_else(|_| out.clone()));
    }
    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(command));
    Run::new(command, config, out, common.quiet)
}

fn save(run: &mut Run, name: &str, text: &str) -> Result<(), CliError> {
    let path = run.artifact(name);
    write_string(&path, text).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn save_json<T: serde::Serialize>(run: &mut Run, name: &str, value: &T) -> Result<(), CliError> {
    let path = run.artifact(name);
    write_json(&path, value).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn observations_csv(obs: &Observations) -> String {
    match obs {
        Observations::Trajectory(t) => trajectory_csv(t),
        Observations::Field(f) => field_csv(f),
    }
}

/// Training data with its library, plus the scenario when simulated.
struct Prepared {
    system: String,
    state_names: Vec<String>,
    dataset: Dataset,
    library: CandidateLibrary,
    scenario: Option<ScenarioData>,
}

fn read_external(d: &ExternalData) -> Result<Prepared, CliError> {
    let (dataset, mode, header) = match d.format {
        DataFormat::Trajectory => {
            let traj =
                read_trajectory_csv(&d.path).map_err(|e| CliError::data(format!("{}: {e}", d.path.display())))?;
            let header = read_numeric_csv(&d.path).map(|t| t.header[1..].to_vec()).unwrap_or_default();
            (Dataset::from_trajectory(&traj)?, LibraryMode::Ode, header)
        }
        DataFormat::Field => {
            let field = read_field_csv(&d.path).map_err(|e| CliError::data(format!("{}: {e}", d.path.display())))?;
            (Dataset::from_field(&field)?, LibraryMode::Pde, vec!["u".to_string()])
        }
    };
    let state_names = if d.state_names.is_empty() { header } else { d.state_names.clone() };
    if state_names.len() != dataset.target_dims() {
        return Err(CliError::config(format!(
            "{} state names given for {} state columns",
            state_names.len(),
            dataset.target_dims()
        )));
    }
    let library = build_library(&dataset, d.max_degree, mode)?;
    let system = d.path.file_stem().map_or("external".into(), |s| s.to_string_lossy().into_owned());
    Ok(Prepared { system, state_names, dataset, library, scenario: None })
}

fn prepare(run: &mut Run, config: &ExperimentConfig) -> Result<Prepared, CliError> {
    match config.source()? {
        Source::Scenario(s) => {
            run.seed("noise", derive(config.seed, "noise"));
            let data = s.generate(config.seed)?;
            Ok(Prepared {
                system: s.system.name().to_string(),
                state_names: s.system.state_names(),
                dataset: data.dataset.clone(),
                library: data.library.clone(),
                scenario: Some(data),
            })
        }
        Source::External(d) => read_external(d),
    }
}

fn fit_config(run: &mut Run, config: &ExperimentConfig) -> FitConfig {
    let mut fit = config.fit.clone();
    fit.chain.seed = derive(config.seed, "fit");
    run.seed("fit", fit.chain.seed);
    fit
}

fn write_model(run: &mut Run, model: &IdentifiedModel, system: &str, state_names: Vec<String>) -> Result<(), CliError> {
    let names = model.basis_names.clone();
    save_json(run, "model.json", &ModelReport::from_model(model, system, state_names))?;
    save(run, "samples.csv", &samples_csv(&model.samples, &model.mask, &names))?;
    save(run, "energy_trace.csv", &energy_trace_csv(&model.samples.diagnostics))?;
    save_json(run, "diagnostics.json", &DiagnosticsReport::new(&model.samples.diagnostics, "energy_trace.csv"))
}

fn describe(model: &IdentifiedModel) -> String {
    let terms: Vec<String> =
        model.summary.iter().map(|s| format!("{} [{}] {:.6} ± {:.2e}", s.name, s.dim, s.mode, s.std)).collect();
    terms.join("\n  ")
}

pub fn simulate(common: &Common) -> Result<(), CliError> {
    let mut run = setup("simulate", common)?;
    let config = run.config().clone();
    let scenario = config.scenario.as_ref().ok_or_else(|| CliError::config("simulate needs a [scenario] section"))?;
    run.seed("noise", derive(config.seed, "noise"));
    let data = scenario.generate(config.seed)?;
    save(&mut run, "clean.csv", &observations_csv(&data.clean))?;
    save(&mut run, "noisy.csv", &observations_csv(&data.noisy))?;
    save_json(&mut run, "library.json", &library_manifest(&data.library.basis))?;
    run.log(format!("simulated {} ({} training rows)", scenario.system.name(), data.dataset.n_rows()));
    run.finish()
}

pub fn fit(common: &Common) -> Result<(), CliError> {
    let mut run = setup("fit", common)?;
    let config = run.config().clone();
    let prepared = prepare(&mut run, &config)?;
    let fit = fit_config(&mut run, &config);
    run.log(format!("fitting {} with {} on {} rows", prepared.system, fit.chain.method, prepared.dataset.n_rows()));
    let mut model = fit_model(&prepared.dataset, &prepared.library, &fit)?;
    if let Some(data) = &prepared.scenario {
        model.metrics = data.metrics(&model)?;
    }
    run.log(format!("  {}", describe(&model)));
    write_model(&mut run, &model, &prepared.system, prepared.state_names)?;
    run.finish()
}

pub fn sweep(common: &Common) -> Result<(), CliError> {
    let mut run = setup("sweep", common)?;
    let config = run.config().clone();
    let prepared = prepare(&mut run, &config)?;
    let fit = fit_config(&mut run, &config);
    let points = threshold_sweep(&prepared.dataset, &prepared.library, &fit, &config.sweep.thresholds)?;
    for p in &points {
        let eb = p.error_bar.map_or("-".into(), |e| format!("{e:.4e}"));
        run.log(format!("threshold {:.4}: error bar {eb}, {} active", p.threshold, p.k_active));
    }
    save(&mut run, "sweep.csv", &sweep_csv(&points))?;
    run.finish()
}

fn external_pool(p: &ExternalPool) -> Result<(Pool, TableOracle), CliError> {
    let read = |path: &PathBuf| read_numeric_csv(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())));
    let pool = read(&p.pool)?;
    let derivs = read(&p.derivatives)?;
    let matrix = |rows: &[Vec<f64>], cols: std::ops::Range<usize>| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| rows[i][cols.start + j])
    };
    let width = pool.header.len();
    let mut dataset = match p.mode {
        LibraryMode::Ode => Dataset::from_states(matrix(&pool.rows, 0..width), None),
        LibraryMode::Pde => {
            if width != 3 {
                return Err(CliError::data(format!("{}: a field pool needs columns u,u_x,u_xx", p.pool.display())));
            }
            Dataset::from_states(matrix(&pool.rows, 0..1), None)
        }
    };
    if p.mode == LibraryMode::Pde {
        dataset.spatial = Some(matrix(&pool.rows, 1..3));
    }
    let oracle = TableOracle::new(matrix(&derivs.rows, 0..derivs.header.len()));
    Ok((pool_from_dataset(dataset, p.max_degree, p.mode)?, oracle))
}

pub fn active(common: &Common) -> Result<(), CliError> {
    let mut run = setup("active", common)?;
    let config = run.config().clone();
    let section = config.active()?;
    run.seed("pool", config.seed);
    let (system, state_names, mut pool, oracle) = match &section.pool {
        PoolSource::LotkaVolterra(spec) => {
            let d = spec.build(config.seed)?;
            ("lotka_volterra".to_string(), vec!["x".into(), "y".into()], d.pool, d.oracle)
        }
        PoolSource::Burgers(spec) => {
            let d = spec.build(config.seed)?;
            ("burgers".to_string(), vec!["u".into()], d.pool, d.oracle)
        }
        PoolSource::External(p) => {
            let (pool, oracle) = external_pool(p)?;
            let names = match p.mode {
                LibraryMode::Ode => Vec::new(),
                LibraryMode::Pde => vec!["u".into()],
            };
            let stem = p.pool.file_stem().map_or("external".into(), |s| s.to_string_lossy().into_owned());
            (stem, names, pool, oracle)
        }
    };
    let fit = fit_config(&mut run, &config);
    let mut acquisition = section.acquisition.clone();
    acquisition.seed = derive(config.seed, "active");
    run.seed("active", acquisition.seed);
    run.log(format!("active learning on {system}: pool of {} rows", pool.len()));
    let result = active_learning_loop(&mut pool, &oracle, &fit, &acquisition)?;
    for r in &result.rounds {
        let eb = r.error_bar.map_or("-".into(), |e| format!("{e:.4e}"));
        let spread = match (r.min_space_filling, r.max_space_filling) {
            (Some(lo), Some(hi)) => format!(", space-filling score range [{lo:.3e}, {hi:.3e}]"),
            _ => String::new(),
        };
        run.log(format!("round {}: {} points, error bar {eb}{spread}", r.round, r.n_selected));
    }
    let wide = result.rounds.iter().any(|r| match (r.min_space_filling, r.max_space_filling) {
        (Some(lo), Some(hi)) => lo > 0.0 && hi / lo > SPREAD_ADVICE,
        _ => false,
    });
    if wide && acquisition.density_exponent == 0.0 {
        run.log("space-filling scores span more than six decades; consider a positive density_exponent");
    }
    save(&mut run, "history.csv", &history_csv(&result.history))?;
    save(&mut run, "rounds.csv", &rounds_csv(&result.rounds))?;
    let state_names = if state_names.len() == result.model.mask.dims() {
        state_names
    } else {
        (1..=result.model.mask.dims()).map(|j| format!("x{j}")).collect()
    };
    write_model(&mut run, &result.model, &system, state_names)?;
    run.finish()
}
