use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn sysid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sysid")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = sysid(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn error_of(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("no error line");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not a JSON error line: {line}"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn small_lv(method: &str, steps: usize) -> String {
    format!(
        "seed = 3\n\
         [scenario]\nnoise = {{ kind = \"gaussian\", fraction = 0.01 }}\n\
         [scenario.system]\nkind = \"lotka_volterra\"\nsteps = {steps}\ndt = 0.01\n\
         [fit]\nthreshold = 0.05\n\
         [fit.chain]\nmethod = \"{method}\"\niterations = 1500\n"
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("{}stepz = 3\n", small_lv("mala", 200)));
    let out = sysid(&["fit", "--config", s(&cfg), "--out", s(&dir.path().join("o")), "--quiet"]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_of(&out);
    assert_eq!(err["error"], "config_error");
    assert!(err["message"].as_str().unwrap().contains("stepz"));
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 1);
}

#[test]
fn bad_arguments_exit_nonzero_with_one_line() {
    let out = sysid(&["fit", "--seed", "abc"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["exit_code"], 2);
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.toml", &small_lv("mala", 0));
    let out = sysid(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.toml", &small_lv("mala", 300));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok(&["simulate", "--config", s(&cfg), "--out", s(&a), "--quiet"]);
    run_ok(&["simulate", "--config", s(&cfg), "--out", s(&b), "--quiet"]);
    for name in ["clean.csv", "noisy.csv", "library.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let noisy = fs::read_to_string(a.join("noisy.csv")).unwrap();
    assert_eq!(noisy.lines().count(), 301);
    assert!(noisy.starts_with("t,x1,x2\n"));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["config"]["seed"], 3);
    assert!(manifest["seeds"]["noise"].is_u64());
    assert_eq!(manifest["config"]["fit"]["max_outer"], 10);
}

#[test]
fn fit_report_and_replay() {
    let dir = TempDir::new().unwrap();
    let runs = dir.path().join("runs");
    for method in ["mala", "resgld"] {
        let cfg = write(dir.path(), &format!("{method}.toml"), &small_lv(method, 600));
        run_ok(&["fit", "--config", s(&cfg), "--out", s(&runs.join(method)), "--quiet"]);
        let model: Value =
            serde_json::from_str(&fs::read_to_string(runs.join(method).join("model.json")).unwrap()).unwrap();
        assert_eq!(model["method"], method);
        assert_eq!(model["provenance"]["chain"]["method"], method);
        for name in ["samples.csv", "diagnostics.json", "energy_trace.csv", "manifest.json"] {
            assert!(runs.join(method).join(name).is_file(), "{name}");
        }
    }
    let replay = dir.path().join("replay");
    let manifest = runs.join("resgld").join("manifest.json");
    run_ok(&["fit", "--config", s(&manifest), "--out", s(&replay), "--quiet"]);
    for name in ["samples.csv", "energy_trace.csv"] {
        assert_eq!(fs::read(runs.join("resgld").join(name)).unwrap(), fs::read(replay.join(name)).unwrap());
    }
    fs::remove_dir_all(&replay).unwrap();

    let out = run_ok(&["report", "--out", s(&runs)]);
    let table = fs::read_to_string(runs.join("report_lotka_volterra.csv")).unwrap();
    assert!(table.starts_with("basis,state,mala,resgld\n"));
    assert!(table.contains("\nerror_bar,,"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("# lotka_volterra"));
}

#[test]
fn report_groups_systems_and_rejects_empty_dirs() {
    let dir = TempDir::new().unwrap();
    let out = sysid(&["report", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(error_of(&out)["message"].as_str().unwrap().contains("empty report"));

    let runs = dir.path().join("runs");
    let lv = write(dir.path(), "lv.toml", &small_lv("mala", 400));
    run_ok(&["fit", "--config", s(&lv), "--out", s(&runs.join("lv")), "--quiet"]);
    let traj: String = std::iter::once("t,a,b".to_string())
        .chain((0..200).map(|i| {
            let t = i as f64 * 0.01;
            format!("{t},{},{}", (2.0 * t).sin(), (2.0 * t).cos())
        }))
        .collect::<Vec<_>>()
        .join("\n");
    let csv = write(dir.path(), "osc.csv", &traj);
    let ext = write(
        dir.path(),
        "ext.toml",
        &format!(
            "[data]\npath = \"{}\"\nformat = \"trajectory\"\n[fit.chain]\nmethod = \"mala\"\niterations = 1000\n",
            csv.file_name().unwrap().to_str().unwrap()
        ),
    );
    run_ok(&["fit", "--config", s(&ext), "--out", s(&runs.join("osc")), "--quiet"]);
    run_ok(&["report", "--out", s(&runs), "--quiet"]);
    let table = fs::read_to_string(runs.join("report_osc.csv")).unwrap();
    assert!(table.starts_with("basis,state,mala\n"));
    assert!(table.contains("\n1,a,"));
    assert!(runs.join("report_lotka_volterra.csv").is_file());
}

#[test]
fn corrupt_data_row_is_named() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "bad.csv", "t,x1\n0,1\n0.1,2\n0.2,oops\n0.3,4\n");
    let cfg = write(dir.path(), "c.toml", "[data]\npath = \"bad.csv\"\nformat = \"trajectory\"\n");
    let before = fs::read(dir.path().join("bad.csv")).unwrap();
    let out = sysid(&["fit", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(error_of(&out)["message"].as_str().unwrap().contains("line 4"));
    assert_eq!(fs::read(dir.path().join("bad.csv")).unwrap(), before);

    let missing = write(dir.path(), "m.toml", "[data]\npath = \"nope.csv\"\nformat = \"trajectory\"\n");
    let out = sysid(&["fit", "--config", s(&missing), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

fn external_pool(dir: &Path, derivative_rows: usize) -> PathBuf {
    let mut pool = String::from("x,y\n");
    let mut derivs = String::from("dx,dy\n");
    for i in 0..60 {
        let (x, y) = (1.0 + 0.1 * i as f64, 2.0 - 0.03 * i as f64);
        pool.push_str(&format!("{x},{y}\n"));
        if i < derivative_rows {
            derivs.push_str(&format!("{},{}\n", 0.5 * x - 0.2 * x * y, -0.3 * y + 0.1 * x * y));
        }
    }
    write(dir, "pool.csv", &pool);
    write(dir, "derivs.csv", &derivs);
    write(
        dir,
        "al.toml",
        "[active.pool]\nkind = \"external\"\npool = \"pool.csv\"\nderivatives = \"derivs.csv\"\nmode = \"ode\"\n\
         [active.acquisition]\ninitial = 10\nbatch = 5\nbudget = 30\ntolerance = 0.0\nposterior_draws = 50\n\
         [fit.chain]\nmethod = \"mala\"\niterations = 800\n",
    )
}

#[test]
fn active_learning_writes_history() {
    let dir = TempDir::new().unwrap();
    let cfg = external_pool(dir.path(), 60);
    let out_dir = dir.path().join("o");
    run_ok(&["active", "--config", s(&cfg), "--out", s(&out_dir), "--quiet"]);
    let rounds = fs::read_to_string(out_dir.join("rounds.csv")).unwrap();
    assert!(rounds.starts_with("round,n_selected,error_bar,k_active"));
    assert_eq!(rounds.lines().count(), 1 + 5);
    let history = fs::read_to_string(out_dir.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 30);
    assert!(out_dir.join("model.json").is_file());
}

#[test]
fn active_learning_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = external_pool(dir.path(), 5);
    let out = sysid(&["active", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(error_of(&out)["message"].as_str().unwrap().contains("pool row"));

    let text = fs::read_to_string(&cfg).unwrap().replace("budget = 30", "budget = 5");
    let cfg = write(dir.path(), "small.toml", &text);
    let out = sysid(&["active", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}
