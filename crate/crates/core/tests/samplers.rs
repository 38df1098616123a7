mod common;

use common::{moments, occupancy, Conjugate, Mixture};
use nalgebra::{DMatrix, DVector};
use sysid::samplers::{mala_step, run_langevin, sgld_step, ChainConfig, Method, Metric};
use sysid::seed::rng_from_seed;
use sysid::Result;

#[test]
fn zero_temperature_is_gradient_descent() {
    let mut rng = rng_from_seed(0);
    let mut x = vec![1.0, -2.0, 0.5];
    for _ in 0..5 {
        let next = sgld_step(&x, 0.1, 0.0, &x, &Metric::Identity, &mut rng).unwrap();
        for (a, b) in next.iter().zip(&x) {
            assert!((a - 0.9 * b).abs() < 1e-15);
        }
        x = next;
    }
}

#[test]
fn unadjusted_chain_matches_standard_normal() {
    let mut rng = rng_from_seed(11);
    let mut x = vec![0.0];
    let mut xs = Vec::with_capacity(200_000);
    for _ in 0..200_000 {
        let g = x.clone();
        x = sgld_step(&x, 1e-3, 1.0, &g, &Metric::Identity, &mut rng).unwrap();
        xs.push(x[0]);
    }
    let (mean, var) = moments(&xs);
    assert!(mean.abs() < 0.05, "mean {mean}");
    assert!((var - 1.0).abs() < 0.1, "variance {var}");
}

#[test]
fn identical_seeds_give_identical_trajectories() {
    let run = |seed| {
        let mut rng = rng_from_seed(seed);
        let mut x = vec![0.3, 0.1];
        for _ in 0..100 {
            let g = x.clone();
            x = sgld_step(&x, 0.05, 1.0, &g, &Metric::Identity, &mut rng).unwrap();
        }
        x
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5), run(6));
}

fn quadratic(precision: &DMatrix<f64>) -> impl Fn(&[f64], &mut [f64]) -> Result<f64> + '_ {
    move |x, g| {
        let v = DVector::from_column_slice(x);
        let pv = precision * &v;
        g.copy_from_slice(pv.as_slice());
        Ok(0.5 * v.dot(&pv))
    }
}

fn mala_run(eta: f64, n: usize, seed: u64) -> (f64, Vec<f64>) {
    let precision = DMatrix::identity(1, 1);
    let eg = quadratic(&precision);
    let mut rng = rng_from_seed(seed);
    let (mut x, mut g) = (vec![0.0], vec![0.0]);
    let mut e = 0.0;
    let (mut accepted, mut xs) = (0usize, Vec::with_capacity(n));
    for _ in 0..n {
        let out = mala_step(&x, e, &g, eta, 1.0, &Metric::Identity, &eg, &mut rng).unwrap();
        accepted += out.accepted as usize;
        (x, g, e) = (out.state, out.gradient, out.energy);
        xs.push(x[0]);
    }
    (accepted as f64 / n as f64, xs)
}

#[test]
fn mala_on_standard_normal() {
    // With the update x − η∇E + sqrt(2η)ξ the proposal at η = 0.5 is
    // x/2 + ξ, which is accepted about 92% of the time.
    let (rate, xs) = mala_run(0.5, 100_000, 2);
    let (_, var) = moments(&xs);
    assert!((0.88..=0.96).contains(&rate), "acceptance {rate}");
    assert!((var - 1.0).abs() < 0.05, "variance {var}");
    let (rate, xs) = mala_run(1.5, 100_000, 3);
    let (_, var) = moments(&xs);
    assert!((0.4..=0.8).contains(&rate), "acceptance {rate}");
    assert!((var - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn mala_on_correlated_gaussian() {
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]);
    let precision = cov.clone().try_inverse().unwrap();
    let eg = quadratic(&precision);
    let mut rng = rng_from_seed(3);
    let (mut x, mut g) = (vec![0.0, 0.0], vec![0.0, 0.0]);
    let mut e = 0.0;
    let mut sum = DMatrix::zeros(2, 2);
    let n = 200_000;
    for _ in 0..n {
        let out = mala_step(&x, e, &g, 0.2, 1.0, &Metric::Identity, &eg, &mut rng).unwrap();
        (x, g, e) = (out.state, out.gradient, out.energy);
        let v = DVector::from_column_slice(&x);
        sum += &v * v.transpose();
    }
    let est = sum / n as f64;
    let rel = (&est - &cov).norm() / cov.norm();
    assert!(rel < 0.1, "relative Frobenius error {rel}");
}

#[test]
fn proposal_equal_to_current_state_is_always_accepted() {
    // With a zero gradient and a step so small that the noise underflows
    // relative to the state, the proposal coincides with the current state.
    let eg = |_: &[f64], g: &mut [f64]| {
        g.fill(0.0);
        Ok(0.0)
    };
    let mut rng = rng_from_seed(9);
    for _ in 0..1000 {
        let out = mala_step(&[1e10], 0.0, &[0.0], 1e-300, 1.0, &Metric::Identity, eg, &mut rng).unwrap();
        assert!(out.accepted);
    }
}

#[test]
fn every_method_recovers_the_conjugate_posterior() {
    let target = Conjugate::new(4);
    let (mean, cov) = target.closed_form();
    for method in Method::ALL {
        let config = ChainConfig { method, iterations: 100_000, seed: 21, ..ChainConfig::default() };
        let eta = match method {
            Method::Mala => 0.8,
            Method::Cyclical => 0.1,
            _ => 0.05,
        };
        let out = run_langevin(&target, &config, mean.as_slice(), eta).unwrap();
        assert_eq!(out.draws.len(), 50_000);
        for j in 0..3 {
            let xs: Vec<f64> = out.draws.iter().map(|d| d[j]).collect();
            let (m, v) = moments(&xs);
            assert!((m - mean[j]).abs() < 0.03 * mean[j].abs(), "{method} mean[{j}] {m} vs {}", mean[j]);
            assert!((v - cov[(j, j)]).abs() < 0.1 * cov[(j, j)], "{method} var[{j}] {v} vs {}", cov[(j, j)]);
        }
    }
}

#[test]
fn burn_in_and_thinning_fix_the_draw_count() {
    let target = Conjugate::new(1);
    let (mean, _) = target.closed_form();
    let config = ChainConfig { method: Method::Sgld, iterations: 1000, seed: 1, ..ChainConfig::default() };
    let out = run_langevin(&target, &config, mean.as_slice(), 0.05).unwrap();
    assert_eq!(out.draws.len(), 500);
    let thinned = ChainConfig { thin: 3, ..config.clone() };
    assert_eq!(run_langevin(&target, &thinned, mean.as_slice(), 0.05).unwrap().draws.len(), 167);
    let again = run_langevin(&target, &config, mean.as_slice(), 0.05).unwrap();
    assert_eq!(out.draws, again.draws);
}

#[test]
fn replica_exchange_visits_both_mixture_modes() {
    let (eta, iterations) = (0.01, 10_000);
    let mut single_mode = 0;
    for seed in 0..10 {
        let sgld = ChainConfig { method: Method::Sgld, iterations, seed, ..ChainConfig::default() };
        let p = occupancy(&run_langevin(&Mixture, &sgld, &[3.0], eta).unwrap().draws);
        single_mode += (p.min(1.0 - p) < 0.2) as usize;
    }
    assert!(single_mode >= 5, "SGLD was single-mode in only {single_mode} of 10 runs");
    let resgld = ChainConfig { method: Method::Resgld, iterations, seed: 0, ..ChainConfig::default() };
    let out = run_langevin(&Mixture, &resgld, &[3.0], eta).unwrap();
    let p = occupancy(&out.draws);
    assert!(p.min(1.0 - p) >= 0.2, "reSGLD positive-mode share {p}");
    assert!(out.diagnostics.swap_accepts > 0);
}
