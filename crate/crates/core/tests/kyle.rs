use std::sync::Arc;

use approx::assert_abs_diff_eq;
use kylebridge::kernels::*;
use kylebridge::kyle::*;
use kylebridge::simulate::TableOptions;
use nalgebra::{DMatrix, DVector};

fn brownian() -> Arc<dyn TransitionKernel> {
    Arc::new(BrownianKernel::new(8.0).unwrap())
}

fn lambda(eps: f64) -> f64 {
    (-eps + (eps * eps + 4.0).sqrt()) / 2.0
}

#[test]
fn sweep_matches_gaussian_closed_forms() {
    let eps = vec![1.0, 0.5, 0.1, 0.01];
    let cfg = SweepConfig::new(eps.clone(), brownian());
    let res = eps_sweep(&cfg).unwrap();
    assert!(res.all_converged());
    assert!(res.gap_decreasing());
    for r in &res.rows {
        let l = lambda(r.eps);
        assert_eq!(r.lambda, kylebridge::schrodinger::gaussian_closed_form(r.eps).unwrap().lambda);
        assert_abs_diff_eq!(r.lambda, l, epsilon = 1e-14);
        assert_abs_diff_eq!(r.entropy, -0.5 * (r.eps * l).ln(), epsilon = 1e-6);
        assert_abs_diff_eq!(r.value, 0.5 * r.eps * (r.eps * l).ln() + l, epsilon = 1e-6);
        assert_abs_diff_eq!(r.corr_theory, l, epsilon = 1e-6);
        assert!(r.corr_sim.is_nan());

        // the same lattice gap computed from the closed-form strategy
        let mut sq = 0.0;
        let mut n = 0;
        for i in 0..10 {
            let t = 0.9 * i as f64 / 9.0;
            for a in 0..9 {
                let y = -2.0 + 0.5 * a as f64;
                for b in 0..9 {
                    let z1 = -2.0 + 0.5 * b as f64;
                    let d = l * (z1 - l * y) / (1.0 - t * l * l) - (z1 - y) / (1.0 - t);
                    sq += d * d;
                    n += 1;
                }
            }
        }
        assert_abs_diff_eq!(r.drift_gap, (sq / n as f64).sqrt(), epsilon = 1e-5);
    }
}

#[test]
fn gaussian_strategy_is_linear_in_signal_and_flow() {
    for t in [0.0, 0.3, 0.8] {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for a in 0..7 {
            for b in 0..7 {
                let (z1, y) = (-1.5 + 0.5 * a as f64, -1.5 + 0.5 * b as f64);
                rows.extend([1.0, z1, y]);
                rhs.push(insider_strategy_gaussian(0.5, t, z1, y).unwrap());
            }
        }
        let x = DMatrix::from_row_slice(rhs.len(), 3, &rows);
        let yv = DVector::from_vec(rhs);
        let beta = x.clone().svd(true, true).solve(&yv, 1e-14).unwrap();
        let resid = (&x * &beta - &yv).amax();
        assert!(resid < 1e-12, "t {t}: {resid}");
    }
}

#[test]
fn value_tends_to_one() {
    let mut last = 0.0;
    for eps in [1.0, 0.5, 0.1, 0.01, 1e-4] {
        let v = value_of_information(eps).unwrap();
        assert!(v > last && v < 1.0);
        last = v;
    }
    assert_abs_diff_eq!(value_of_information(0.5).unwrap(), 0.545622, epsilon = 1e-6);
    // V(0.01) = 0.97196...; the limit is approached at rate eps log(1/eps)
    assert_abs_diff_eq!(value_of_information(0.01).unwrap(), 0.9719616, epsilon = 1e-7);
}

#[test]
fn failed_solves_are_flagged_without_aborting() {
    let mut cfg = SweepConfig::new(vec![1.0, 0.5, 0.1, 0.01], brownian());
    cfg.max_iter = 40;
    let res = eps_sweep(&cfg).unwrap();
    assert_eq!(res.rows.len(), 4);
    assert!(res.rows[0].converged && res.rows[1].converged);
    assert!(!res.rows[3].converged);
    assert!(res.rows[3].value.is_nan() && res.rows[3].lambda.is_finite());
    assert!(!res.all_converged());
    let mut out = Vec::new();
    write_sweep_csv(&res, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("eps,lambda,value,entropy,drift_gap,corr_sim,corr_theory,converged\n"));
    assert!(text.lines().last().unwrap().ends_with(",false"));
}

#[test]
fn bad_eps_lists_are_rejected() {
    assert!(eps_sweep(&SweepConfig::new(vec![], brownian())).is_err());
    assert!(eps_sweep(&SweepConfig::new(vec![0.1, 0.5], brownian())).is_err());
    assert!(eps_sweep(&SweepConfig::new(vec![0.5, -0.1], brownian())).is_err());
}

#[test]
fn simulated_correlation_in_the_sweep() {
    let mut cfg = SweepConfig::new(vec![0.5], brownian());
    cfg.nodes = 201;
    cfg.table = TableOptions { t_end: 0.999, uniform: 46, geometric: 15, half_width: 5.0, nodes: 101 };
    cfg.sim = Some(SimSpec { steps: 400, paths: 4000, seed: 3, delta: 1e-3 });
    let r = &eps_sweep(&cfg).unwrap().rows[0];
    assert!((r.corr_sim - lambda(0.5)).abs() < 0.03, "{}", r.corr_sim);
}
