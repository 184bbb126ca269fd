//! Entropic optimal transport for the terminal coupling of signal and order flow.

mod cost;
mod coupling;
mod gaussian;
mod sinkhorn;

pub use cost::{CostSpec, Payoff};
pub use coupling::{mu1_eps_build, Coupling, CouplingDiagnostics, JointMeasure, Marginal, Moments, StrataMasses};
pub use gaussian::{gaussian_closed_form, GaussianClosedForm};
pub use sinkhorn::{sinkhorn_solve, SchrodingerSolution, SinkhornOptions};

use crate::error::{Error, Result};
use crate::special::log_sum_exp;

/// Sup-norm residual, in potential units, of the Kyle form of the Schrödinger
/// system on the supports of `sol`:
///
/// `eps log int exp((y F(z) + phi_F(z)) / eps) eta(dz) = -zeta(y)` and
/// `eps log int exp((y F(z) + zeta(y)) / eps) eta(dy) = -phi_F(z)`.
///
/// Both equations are unchanged by `(phi_F + c, zeta - c)`.
pub fn kyle_system_residual(sol: &SchrodingerSolution, phi_f: &[f64], zeta: &[f64], payoff: &Payoff) -> Result<f64> {
    let z = &sol.coupling.z;
    let y = &sol.coupling.y;
    if phi_f.len() != z.len() || zeta.len() != y.len() {
        return Err(Error::Shape("potentials do not match the supports".into()));
    }
    let eps = sol.eps;
    let fz: Vec<f64> = z.points.iter().map(|&v| payoff.apply(v)).collect();
    let log_mz: Vec<f64> = z.mass.iter().map(|m| m.ln()).collect();
    let log_my: Vec<f64> = y.mass.iter().map(|m| m.ln()).collect();
    let mut worst: f64 = 0.0;
    for (j, &yy) in y.points.iter().enumerate() {
        let l = log_sum_exp((0..z.len()).map(|i| (yy * fz[i] + phi_f[i]) / eps + log_mz[i]));
        worst = worst.max((eps * l + zeta[j]).abs());
    }
    for (i, &fi) in fz.iter().enumerate() {
        let l = log_sum_exp((0..y.len()).map(|j| (y.points[j] * fi + zeta[j]) / eps + log_my[j]));
        worst = worst.max((eps * l + phi_f[i]).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{eta_measure, Domain, KilledBrownianKernel, TransitionKernel};
    use crate::quadrature::{gaussian_measure, QuadratureGrid};

    fn gaussian_solution(eps: f64, nodes: usize) -> SchrodingerSolution {
        let eta = gaussian_measure(QuadratureGrid::uniform(&Domain::free(8.0).unwrap(), nodes).unwrap()).unwrap();
        sinkhorn_solve(&eta, &eta, &CostSpec::Quadratic(Payoff::Identity), &SinkhornOptions::new(eps)).unwrap()
    }

    #[test]
    fn gaussian_potentials_up_to_gauge() {
        let sol = gaussian_solution(0.5, 401);
        let cf = gaussian_closed_form(0.5).unwrap();
        let (phi_f, zeta) = sol.kyle_potentials();
        let z = &sol.coupling.z.points;
        let c = phi_f[200] - cf.phi_f(0.0);
        for (i, &x) in z.iter().enumerate().filter(|(_, x)| x.abs() <= 5.0) {
            assert!((phi_f[i] - cf.phi_f(x) - c).abs() < 1e-8, "phi at {x}");
            assert!((zeta[i] - cf.zeta(x) + c).abs() < 1e-8, "zeta at {x}");
        }
        let corr = sol.coupling.joint().moments().corr();
        assert!((corr - cf.lambda).abs() < 1e-9, "{corr}");
    }

    #[test]
    fn kyle_residual_and_gauge() {
        let sol = gaussian_solution(0.5, 201);
        let (mut phi_f, mut zeta) = sol.kyle_potentials();
        let r0 = kyle_system_residual(&sol, &phi_f, &zeta, &Payoff::Identity).unwrap();
        assert!(r0 < 1e-9, "{r0}");
        phi_f.iter_mut().for_each(|p| *p += 0.37);
        zeta.iter_mut().for_each(|p| *p -= 0.37);
        let r1 = kyle_system_residual(&sol, &phi_f, &zeta, &Payoff::Identity).unwrap();
        assert!(r1 < 1e-9, "{r1}");
        phi_f[100] += 0.1;
        let r2 = kyle_system_residual(&sol, &phi_f, &zeta, &Payoff::Identity).unwrap();
        assert!(r2 > 0.05);
    }

    #[test]
    fn bilinear_cost_gives_the_same_plan() {
        let eta = gaussian_measure(QuadratureGrid::uniform(&Domain::free(8.0).unwrap(), 161).unwrap()).unwrap();
        let a = sinkhorn_solve(&eta, &eta, &CostSpec::Quadratic(Payoff::Identity), &SinkhornOptions::new(0.7)).unwrap();
        let b = sinkhorn_solve(&eta, &eta, &CostSpec::Bilinear(Payoff::Identity), &SinkhornOptions::new(0.7)).unwrap();
        let d = a.coupling.f.iter().zip(b.coupling.f.iter()).map(|(x, y)| (x / y - 1.0).abs()).fold(0.0, f64::max);
        assert!(d < 1e-8, "{d}");
    }

    #[test]
    fn reports_non_convergence() {
        let eta = gaussian_measure(QuadratureGrid::uniform(&Domain::free(8.0).unwrap(), 161).unwrap()).unwrap();
        let opts = SinkhornOptions::new(0.1).tol(1e-14).max_iter(10);
        match sinkhorn_solve(&eta, &eta, &CostSpec::Quadratic(Payoff::Identity), &opts) {
            Err(Error::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 10);
                assert!(residual > 1e-14 && residual.is_finite());
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn killed_strata_match_the_default_atom() {
        let k = KilledBrownianKernel::new(0.0, 8.0).unwrap();
        let grid = QuadratureGrid::uniform(k.domain(), 400).unwrap();
        let eta = eta_measure(&k, &grid, 1.0).unwrap();
        let sol = sinkhorn_solve(&eta, &eta, &CostSpec::Quadratic(Payoff::Identity), &SinkhornOptions::new(0.5)).unwrap();
        let (joint, diag) = mu1_eps_build(&sol.coupling);
        let s = diag.strata;
        let atom = eta.atom_mass / eta.total_mass();
        assert!((s.z_absorbed + s.both_absorbed - atom).abs() < 1e-9);
        assert!((s.y_absorbed + s.both_absorbed - atom).abs() < 1e-9);
        assert!((joint.total() - 1.0).abs() < 1e-12);
        assert!(diag.f1_defect < 1e-9 && diag.f2_defect < 1e-9);
    }

    #[test]
    fn product_coupling_is_independent() {
        let eta = gaussian_measure(QuadratureGrid::uniform(&Domain::free(8.0).unwrap(), 161).unwrap()).unwrap();
        let c = Coupling::product(&eta, &eta);
        let m = c.joint().moments();
        assert!(m.cov.abs() < 1e-14);
        assert_eq!(c.row_at(0.123), vec![1.0; 161]);
    }
}
