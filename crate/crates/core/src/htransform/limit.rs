//! The `eps -> 0` harmonic function `h0` (terminal coupling concentrated on the
//! diagonal) and the enlargement drift it induces.

use crate::error::{Error, Result};
use crate::kernels::TransitionKernel;
use crate::quadrature::QuadratureGrid;

const TAIL_TOL: f64 = 1e-6;

struct H0Parts {
    value: f64,
    dz: f64,
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::InvalidParameter { name: "t", reason: format!("need 0 <= t < 1, got {t}") });
    }
    Ok(())
}

/// Integration window in `w` around the two starting points, clipped to the
/// kernel's support. Returns the rule and whether each end is a truncation.
fn window(kernel: &dyn TransitionKernel, tau: f64, z: f64, y: f64) -> (QuadratureGrid, bool, bool) {
    let sig = kernel.sigma(0.0, 0.5 * (z + y)).abs().max(1e-12);
    let reach = 12.0 * sig * tau.sqrt();
    let (s_lo, s_hi) = kernel.support();
    let dom = kernel.domain();
    let lo_nat = s_lo.max(dom.lower());
    let hi_nat = s_hi.min(dom.z_upper);
    let lo = lo_nat.max(z.min(y) - reach);
    let hi = hi_nat.min(z.max(y) + reach);
    let panel = 0.25 * sig * tau.sqrt();
    let panels = (((hi - lo) / panel).ceil() as usize).clamp(4, 20_000);
    let lo_truncated = !(dom.is_killed() && lo <= dom.ell);
    (QuadratureGrid::gauss_legendre(lo, hi, panels, 12), lo_truncated, hi > lo)
}

fn h0_parts(kernel: &dyn TransitionKernel, z0: f64, t: f64, z: f64, y: f64, with_dz: bool) -> Result<H0Parts> {
    check_time(t)?;
    let dom = *kernel.domain();
    if !dom.contains(z0) {
        return Err(Error::OutsideDomain { value: z0, ell: dom.ell });
    }
    let tau = 1.0 - t;
    let (g, lo_truncated, _) = window(kernel, tau, z, y);
    let qz = kernel.density_row(t, 1.0, z, &g.nodes);
    let qy = kernel.density_row(t, 1.0, y, &g.nodes);
    let q0 = kernel.density_row(0.0, 1.0, z0, &g.nodes);
    let qzd = if with_dz { kernel.density_dz_row(t, 1.0, z, &g.nodes) } else { Vec::new() };

    let n = g.len();
    let mut contrib = vec![0.0; n];
    let (mut value, mut dz) = (0.0, 0.0);
    for i in 0..n {
        if q0[i] <= 0.0 {
            continue;
        }
        let r = g.weights[i] * qy[i] / q0[i];
        contrib[i] = r * qz[i];
        value += contrib[i];
        if with_dz {
            dz += r * qzd[i];
        }
    }
    // share of the integral in the outermost panels at truncated ends
    let per_panel = 12;
    let edge = |range: std::ops::Range<usize>| contrib[range].iter().map(|v| v.abs()).sum::<f64>();
    let mut tail = edge(n - per_panel..n);
    if lo_truncated {
        tail += edge(0..per_panel);
    }
    if value > 0.0 && tail / value > TAIL_TOL {
        return Err(Error::Truncation { tail: tail / value });
    }

    if dom.is_killed() {
        let l0 = kernel.default_prob(0.0, 1.0, z0);
        if l0 > 0.0 {
            let ly = kernel.default_prob(t, 1.0, y);
            value += kernel.default_prob(t, 1.0, z) * ly / l0;
            if with_dz {
                dz += kernel.default_prob_dz(t, 1.0, z) * ly / l0;
            }
        }
    }
    Ok(H0Parts { value, dz })
}

/// `h0(t, (z, y)) = int q(t,1;z,w) q(t,1;y,w) / q(0,1;z0,w) dw + L(t,1;z) L(t,1;y) / L(0,1;z0)`.
pub fn h0_eval(kernel: &dyn TransitionKernel, z0: f64, t: f64, z: f64, y: f64) -> Result<f64> {
    Ok(h0_parts(kernel, z0, t, z, y, false)?.value)
}

/// `(h0, d h0 / dz)`.
pub fn h0_grad(kernel: &dyn TransitionKernel, z0: f64, t: f64, z: f64, y: f64) -> Result<(f64, f64)> {
    let p = h0_parts(kernel, z0, t, z, y, true)?;
    Ok((p.value, p.dz))
}

/// Enlargement drift `Gamma(t, u, z) = d/du log h0(t, (u, z))`.
pub fn gamma_drift(kernel: &dyn TransitionKernel, z0: f64, t: f64, u: f64, z: f64) -> Result<f64> {
    let (h, hu) = h0_grad(kernel, z0, t, u, z)?;
    Ok(hu / h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{BrownianKernel, KilledBrownianKernel};
    use approx::assert_relative_eq;

    /// Gaussian integral of exp(-A w^2 + B w + C) with the coefficients collected
    /// from the three Brownian densities, z0 = 0.
    fn h0_oracle(t: f64, z: f64, y: f64) -> f64 {
        let tau = 1.0 - t;
        let a = 1.0 / tau - 0.5;
        let b = (z + y) / tau;
        let c = -(z * z + y * y) / (2.0 * tau);
        let pref = (2.0 * std::f64::consts::PI).sqrt() / (2.0 * std::f64::consts::PI * tau);
        pref * (std::f64::consts::PI / a).sqrt() * (b * b / (4.0 * a) + c).exp()
    }

    #[test]
    fn brownian_h0_against_gaussian_integral() {
        let k = BrownianKernel::new(8.0).unwrap();
        for &(t, z, y) in &[(0.0, 0.3, -0.2), (0.5, 1.0, 0.4), (0.9, -0.7, -0.6), (0.99, 0.1, 0.12)] {
            assert_relative_eq!(h0_eval(&k, 0.0, t, z, y).unwrap(), h0_oracle(t, z, y), max_relative = 1e-10);
        }
        // h0(0, (z0, z0)) = 1
        assert_relative_eq!(h0_eval(&k, 0.0, 0.0, 0.0, 0.0).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn brownian_gamma() {
        let k = BrownianKernel::new(8.0).unwrap();
        for &(t, u, z) in &[(0.0, 0.4, -1.0), (0.3, 1.0, 0.2), (0.8, -0.5, 0.5), (0.95, 0.2, 0.1)] {
            let g = gamma_drift(&k, 0.0, t, u, z).unwrap();
            assert_relative_eq!(g, (z - t * u) / (1.0 - t * t), epsilon = 1e-9);
        }
        assert_relative_eq!(gamma_drift(&k, 0.0, 0.0, 0.7, 0.7).unwrap(), 0.7, epsilon = 1e-9);
    }

    #[test]
    fn truncation_is_reported() {
        // with z0 far from the window the 1/q0 weight piles up at the edge
        let k = BrownianKernel::new(3.0).unwrap();
        assert!(matches!(h0_eval(&k, 0.0, 0.0, 2.9, 2.9), Err(Error::Truncation { .. })));
        assert!(h0_eval(&k, 0.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn killed_h0_includes_the_absorbed_stratum() {
        let k = KilledBrownianKernel::new(0.0, 10.0).unwrap();
        // at t = 0 started from z0 on both legs: sum of both strata is one
        assert_relative_eq!(h0_eval(&k, 1.0, 0.0, 1.0, 1.0).unwrap(), 1.0, epsilon = 1e-10);
        let v = h0_eval(&k, 1.0, 0.5, 0.0, 0.0).unwrap();
        assert_relative_eq!(v, 1.0 / k.default_prob(0.0, 1.0, 1.0), epsilon = 1e-12);
    }
}
