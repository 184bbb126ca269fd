//! Equilibrium quantities of the insider problem and their behaviour as the
//! entropic cost vanishes.

mod sweep;

pub use sweep::{eps_sweep, write_sweep_csv, SimSpec, SweepConfig, SweepResult, SweepRow};

use crate::error::{Error, Result};
use crate::quadrature::QuadratureGrid;
use crate::schrodinger::{gaussian_closed_form, SchrodingerSolution};
use crate::special::norm_pdf;

/// Gaussian equilibrium strategy `lambda (z1 - lambda y) / (1 - t lambda^2)`.
pub fn insider_strategy_gaussian(eps: f64, t: f64, z1: f64, y: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::InvalidParameter { name: "t", reason: format!("need 0 <= t < 1, got {t}") });
    }
    Ok(gaussian_closed_form(eps)?.insider_drift(t, z1, y))
}

/// Closed-form value of information `(eps/2) log(eps lambda) + lambda` for `F = Id`.
pub fn value_of_information(eps: f64) -> Result<f64> {
    Ok(gaussian_closed_form(eps)?.value())
}

/// `-E phi_F - E zeta` under the standard normal, by Gauss–Legendre quadrature of
/// the closed-form potentials over `[-12, 12]`.
pub fn value_of_information_quadrature(eps: f64) -> Result<f64> {
    let g = gaussian_closed_form(eps)?;
    let q = QuadratureGrid::gauss_legendre(-12.0, 12.0, 48, 16);
    Ok(-q.integrate(|x| (g.phi_f(x) + g.zeta(x)) * norm_pdf(x)))
}

/// `-E phi_F - E zeta` from a solved Schrödinger system, for any payoff.
pub fn value_from_solution(sol: &SchrodingerSolution) -> f64 {
    let (phi_f, zeta) = sol.kyle_potentials();
    let ez: f64 = phi_f.iter().zip(&sol.coupling.z.mass).map(|(p, m)| p * m).sum();
    let ey: f64 = zeta.iter().zip(&sol.coupling.y.mass).map(|(p, m)| p * m).sum();
    -ez - ey
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_reference_point() {
        let a = insider_strategy_gaussian(0.5, 0.0, 1.0, 0.0).unwrap();
        assert!((a - 0.7807764064044151).abs() < 1e-12);
        let l = gaussian_closed_form(0.3).unwrap().lambda;
        assert!(insider_strategy_gaussian(0.3, 0.4, l * 0.7, 0.7).unwrap().abs() < 1e-15);
        assert!(insider_strategy_gaussian(0.5, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn strategy_tends_to_brownian_bridge() {
        let (t, z1, y) = (0.6, 1.3, -0.4);
        let bb = (z1 - y) / (1.0 - t);
        let mut last = f64::INFINITY;
        for eps in [1e-2, 1e-4, 1e-6, 1e-8] {
            let d = (insider_strategy_gaussian(eps, t, z1, y).unwrap() - bb).abs();
            assert!(d < last);
            last = d;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn value_routes_agree() {
        let v = value_of_information(0.5).unwrap();
        assert!((v - 0.545622).abs() < 1e-6, "{v}");
        let vq = value_of_information_quadrature(0.5).unwrap();
        assert!((v - vq).abs() < 1e-8, "{v} vs {vq}");
        assert!((value_of_information(1e-9).unwrap() - 1.0).abs() < 1e-7);
    }
}
