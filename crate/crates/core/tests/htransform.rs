use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_abs_diff_eq;
use kylebridge::htransform::*;
use kylebridge::kernels::*;
use kylebridge::quadrature::QuadratureGrid;
use kylebridge::schrodinger::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brownian() -> Arc<dyn TransitionKernel> {
    Arc::new(BrownianKernel::new(8.0).unwrap())
}

fn killed() -> Arc<dyn TransitionKernel> {
    Arc::new(KilledBrownianKernel::new(0.0, 8.0).unwrap())
}

fn solved(kernel: &Arc<dyn TransitionKernel>, z0: f64, nodes: usize, eps: f64) -> Arc<Coupling> {
    let eta = eta_measure(kernel.as_ref(), &QuadratureGrid::uniform(kernel.domain(), nodes).unwrap(), z0).unwrap();
    sinkhorn_solve(&eta, &eta, &CostSpec::Quadratic(Payoff::Identity), &SinkhornOptions::new(eps)).unwrap().coupling
}

fn unit(kernel: &Arc<dyn TransitionKernel>, z0: f64) -> Arc<Coupling> {
    let eta = eta_measure(kernel.as_ref(), &QuadratureGrid::uniform(kernel.domain(), 401).unwrap(), z0).unwrap();
    Arc::new(Coupling::from_fn(&eta, &eta, |_, _| 1.0))
}

fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn unit_density_gives_unit_fields() {
    for (k, z0) in [(brownian(), 0.0), (killed(), 1.0)] {
        let bf = BridgeFields::new(k.clone(), unit(&k, z0), z0).unwrap();
        for &(t, z, y) in &[(0.0, 1.0, 1.0), (0.3, 0.5, 2.0), (0.8, 3.0, 0.2)] {
            // exact up to the grid's quadrature error
            assert_abs_diff_eq!(bf.h(t, z, y).unwrap(), 1.0, epsilon = 1e-6);
            assert_abs_diff_eq!(bf.pi1(t, y).unwrap(), 1.0, epsilon = 1e-6);
            assert_abs_diff_eq!(bf.pi2(t, z).unwrap(), 1.0, epsilon = 1e-6);
            assert_abs_diff_eq!(bf.rho(t, y, z, RhoNorm::ByMarginal).unwrap(), 1.0, epsilon = 1e-6);
            for field in [Field::H, Field::Pi1, Field::Pi2, Field::Rho { z1: z, norm: RhoNorm::Raw }] {
                let g = bf.grad_log(field, t, z, y).unwrap();
                assert!(g.dz.abs() < 1e-6 && g.dy.abs() < 1e-6, "{field:?} {g:?}");
            }
        }
        assert!(bf.h(1.0, 0.5, 0.5).is_err());
    }
}

#[test]
fn h_starts_at_one() {
    for (k, z0) in [(brownian(), 0.0), (killed(), 1.0)] {
        let bf = BridgeFields::new(k.clone(), solved(&k, z0, 401, 0.5), z0).unwrap();
        assert_abs_diff_eq!(bf.h(0.0, z0, z0).unwrap(), 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(bf.pi1(0.0, z0).unwrap(), 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(bf.pi2(0.0, z0).unwrap(), 1.0, epsilon = 1e-8);
    }
}

#[test]
fn rho_at_start_and_on_the_boundary() {
    let k = killed();
    let c = solved(&k, 1.0, 401, 0.5);
    let bf = BridgeFields::new(k.clone(), c.clone(), 1.0).unwrap();
    let atom = 0;
    for &z in &[0.0, 0.37, 1.0, 2.51] {
        assert_abs_diff_eq!(bf.rho(0.0, 1.0, z, RhoNorm::ByMarginal).unwrap(), 1.0, epsilon = 1e-8);
        let row = c.row_at(z);
        for t in [0.2, 0.7] {
            assert_abs_diff_eq!(bf.rho(t, 0.0, z, RhoNorm::ByMarginal).unwrap(), row[atom] / c.f1_at(z), epsilon = 1e-12);
        }
    }
}

#[test]
fn rho_mixes_back_into_h() {
    let k = killed();
    let c = solved(&k, 1.0, 401, 0.5);
    let bf = BridgeFields::new(k.clone(), c.clone(), 1.0).unwrap();
    let m = &c.z;
    for &(t, u, z) in &[(0.2, 1.0, 0.8), (0.5, 0.3, 2.0), (0.8, 2.5, 1.1)] {
        let mut lhs = k.default_prob(t, 1.0, u) * c.f1[0] * bf.rho(t, z, 0.0, RhoNorm::ByMarginal).unwrap();
        for i in 1..m.len() {
            let w = m.points[i];
            lhs += bf.rho(t, z, w, RhoNorm::ByMarginal).unwrap() * k.density(t, 1.0, u, w) * c.f1[i] * m.weights[i];
        }
        assert_abs_diff_eq!(lhs, bf.h(t, u, z).unwrap(), epsilon = 1e-6);
    }
}

#[test]
fn conditional_law_is_normalised() {
    let k = brownian();
    let bf = BridgeFields::new(k.clone(), solved(&k, 0.0, 401, 0.5), 0.0).unwrap();
    for &(t, y) in &[(0.3, 0.4), (0.6, -1.2), (0.9, 2.0)] {
        let pi = bf.pi1(t, y).unwrap();
        let mass = simpson(-9.0, 9.0, 3000, |z| bf.h(t, z, y).unwrap() * k.density(0.0, t, 0.0, z)) / pi;
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-8);
    }
}

#[test]
fn pi_marginals_coincide_for_symmetric_f() {
    let k = brownian();
    let bf = BridgeFields::new(k.clone(), solved(&k, 0.0, 401, 0.3), 0.0).unwrap();
    for &(t, x) in &[(0.1, 0.5), (0.5, -1.0), (0.9, 1.7)] {
        assert_abs_diff_eq!(bf.pi1(t, x).unwrap(), bf.pi2(t, x).unwrap(), epsilon = 1e-9);
        assert_abs_diff_eq!(bf.pi1(t, x).unwrap(), bf.pi1_collapsed(t, x).unwrap(), epsilon = 1e-9);
    }
}

#[test]
fn gaussian_insider_drift() {
    let k = brownian();
    let bf = BridgeFields::new(k.clone(), solved(&k, 0.0, 801, 0.5), 0.0).unwrap();
    let l = 0.7807764064044151;
    for &(t, z1, y) in &[(0.0, 1.0, 0.0), (0.45, -1.3, 0.8), (0.9, 2.0, 1.9)] {
        let g = bf.grad_log(Field::Rho { z1, norm: RhoNorm::Raw }, t, 0.0, y).unwrap();
        assert_abs_diff_eq!(g.dy, l * (z1 - l * y) / (1.0 - t * l * l), epsilon = 1e-6);
    }
}

#[test]
fn analytic_and_difference_gradients_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (k, z0) in [(brownian(), 0.0), (killed(), 1.0)] {
        let bf = BridgeFields::new(k.clone(), solved(&k, z0, 401, 0.5), z0).unwrap();
        for _ in 0..100 {
            let t = rng.random_range(0.0..0.9);
            let z = rng.random_range(0.2..3.0);
            let y = rng.random_range(0.2..3.0);
            let z1 = rng.random_range(0.2..3.0);
            for field in [Field::H, Field::Rho { z1, norm: RhoNorm::Raw }, Field::Pi1, Field::Pi2] {
                bf.grad_log_checked(field, t, z, y, 1e-5).unwrap();
            }
        }
    }
}

#[test]
fn rho_solves_the_backward_equation() {
    let k = brownian();
    let bf = BridgeFields::new(k.clone(), solved(&k, 0.0, 401, 0.5), 0.0).unwrap();
    let (dt, dy) = (1e-3, 1e-2);
    let rho = |t: f64, y: f64, z1: f64| bf.rho(t, y, z1, RhoNorm::Raw).unwrap();
    for t in [0.1, 0.4, 0.7] {
        for y in [-1.5, 0.0, 1.0] {
            for z1 in [-1.0, 0.5] {
                let rt = (rho(t + dt, y, z1) - rho(t - dt, y, z1)) / (2.0 * dt);
                let ryy = (rho(t, y + dy, z1) - 2.0 * rho(t, y, z1) + rho(t, y - dy, z1)) / (dy * dy);
                assert!((rt + 0.5 * ryy).abs() < 1e-4, "t {t} y {y}: {}", rt + 0.5 * ryy);
            }
        }
    }
}

#[test]
fn h_tends_to_f_near_maturity() {
    let k = brownian();
    let eta = eta_measure(k.as_ref(), &QuadratureGrid::uniform(k.domain(), 801).unwrap(), 0.0).unwrap();
    let cf = gaussian_closed_form(0.5).unwrap();
    let bf = BridgeFields::new(k.clone(), Arc::new(Coupling::from_fn(&eta, &eta, move |z, y| cf.density(z, y))), 0.0).unwrap();
    let pts: Vec<f64> = (0..=6).map(|i| -1.5 + 0.5 * i as f64).collect();
    let mut last = f64::INFINITY;
    for t in [0.9, 0.99, 0.999] {
        let mut err: f64 = 0.0;
        for &z in &pts {
            for &y in &pts {
                err = err.max((bf.h(t, z, y).unwrap() - cf.density(z, y)).abs());
            }
        }
        assert!(err < last, "t {t}: {err}");
        last = err;
    }
    assert!(last < 1e-2);
}

#[test]
fn h_many_matches_pointwise_evaluation() {
    let k = killed();
    let bf = BridgeFields::new(k.clone(), solved(&k, 1.0, 201, 0.5), 1.0).unwrap();
    let z = [0.0, 0.5, 1.0, 2.0, 3.3];
    let y = [1.0, 0.0, 0.7, 2.2, 0.1];
    let many = bf.h_many(0.4, &z, &y).unwrap();
    for i in 0..z.len() {
        assert_abs_diff_eq!(many[i], bf.h(0.4, z[i], y[i]).unwrap(), epsilon = 1e-12);
    }
}

#[test]
fn drift_table_tracks_exact_gradients() {
    let k = brownian();
    let c = solved(&k, 0.0, 201, 0.5);
    let bf = BridgeFields::new(k.clone(), c.clone(), 0.0).unwrap();
    let lattice = TimeLattice::bridge(0.99, 31, 10).unwrap();
    let axis = SpaceAxis::for_kernel(k.as_ref(), 4.0, 161).unwrap();
    let tab = DriftTable::from_coupling(k.as_ref(), &c, lattice, axis).unwrap();
    let d = tab
        .diagnostics(200, 5, |t, z, y| {
            let g = bf.grad_log(Field::H, t, z, y)?;
            Ok((g.dz, g.dy))
        })
        .unwrap();
    assert!(d.mean_abs_error < 5e-3, "{d:?}");
    let mut out = Vec::new();
    tab.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("t,z,y,drift_z,drift_y\n"));
    assert_eq!(text.lines().count(), 41 * 161 * 161 + 1);
}

/// `h0` for Brownian motion from zero: the Gaussian integral
/// `int phi_tau(w - z) phi_tau(w - y) / phi_1(w) dw`, tau = 1 - t, done symbolically:
/// exponent `-a w^2 + b w - c` with `a = 1/tau - 1/2`, `b = (z + y)/tau`,
/// `c = (z^2 + y^2)/(2 tau)`.
fn h0_oracle(t: f64, z: f64, y: f64) -> f64 {
    let tau = 1.0 - t;
    let a = 1.0 / tau - 0.5;
    let b = (z + y) / tau;
    let c = (z * z + y * y) / (2.0 * tau);
    let pre = (2.0 * PI).sqrt() / (2.0 * PI * tau);
    pre * (PI / a).sqrt() * (b * b / (4.0 * a) - c).exp()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn h0_matches_gaussian_integral_and_is_symmetric(t in 0.0f64..0.95, z in -2.5f64..2.5, y in -2.5f64..2.5) {
        let k = BrownianKernel::new(12.0).unwrap();
        let a = h0_eval(&k, 0.0, t, z, y).unwrap();
        prop_assert!((a - h0_oracle(t, z, y)).abs() < 1e-8 * a.max(1.0));
        prop_assert!((a - h0_eval(&k, 0.0, t, y, z).unwrap()).abs() < 1e-10 * a.max(1.0));
    }

    #[test]
    fn gamma_matches_closed_form(t in 0.0f64..0.95, u in -2.5f64..2.5, z in -2.5f64..2.5) {
        let k = BrownianKernel::new(12.0).unwrap();
        let g = gamma_drift(&k, 0.0, t, u, z).unwrap();
        prop_assert!((g - (z - t * u) / (1.0 - t * t)).abs() < 1e-8);
        let h = 1e-5;
        let fd = (h0_oracle(t, u + h, z).ln() - h0_oracle(t, u - h, z).ln()) / (2.0 * h);
        prop_assert!((g - fd).abs() < 1e-6);
    }
}
