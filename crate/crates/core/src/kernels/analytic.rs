use super::{Domain, TransitionKernel};
use crate::error::{Error, Result};
use crate::special::{gauss, inv_mills, norm_pdf};

fn check_times(s: f64, t: f64) -> Result<f64> {
    if !(t > s) {
        return Err(Error::TimeOrder { s, t });
    }
    Ok(t - s)
}

/// Free Brownian transition density.
pub fn bm_density(s: f64, t: f64, z: f64, y: f64) -> Result<f64> {
    let tau = check_times(s, t)?;
    Ok(gauss(y - z, tau))
}

/// Brownian density killed at `ell`, by the reflection principle.
pub fn killed_bm_density(s: f64, t: f64, z: f64, y: f64, ell: f64) -> Result<f64> {
    let tau = check_times(s, t)?;
    for v in [z, y] {
        if v <= ell {
            return Err(Error::OutsideDomain { value: v, ell });
        }
    }
    Ok(killed_q(tau, z, y, ell))
}

/// Probability that Brownian motion started at `z` hits `ell` before time `t - s`.
pub fn default_prob(s: f64, t: f64, z: f64, ell: f64) -> Result<f64> {
    let tau = check_times(s, t)?;
    if z < ell {
        return Err(Error::OutsideDomain { value: z, ell });
    }
    Ok(killed_l(tau, z, ell))
}

// q = g(y - z) (1 - exp(-k)) with k = 2 (y - ell)(z - ell) / tau, which stays
// accurate as z approaches the boundary.
#[inline]
fn killed_q(tau: f64, z: f64, y: f64, ell: f64) -> f64 {
    let k = 2.0 * (y - ell) * (z - ell) / tau;
    gauss(y - z, tau) * -(-k).exp_m1()
}

#[inline]
fn killed_l(tau: f64, z: f64, ell: f64) -> f64 {
    libm::erfc((z - ell) / (2.0 * tau).sqrt())
}

#[derive(Clone, Debug)]
pub struct BrownianKernel {
    domain: Domain,
}

impl BrownianKernel {
    pub fn new(z_upper: f64) -> Result<Self> {
        Ok(Self { domain: Domain::free(z_upper)? })
    }
}

impl TransitionKernel for BrownianKernel {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn density(&self, s: f64, t: f64, z: f64, y: f64) -> f64 {
        let tau = t - s;
        if tau <= 0.0 {
            return 0.0;
        }
        gauss(y - z, tau)
    }

    fn density_dz(&self, s: f64, t: f64, z: f64, y: f64) -> f64 {
        let tau = t - s;
        if tau <= 0.0 {
            return 0.0;
        }
        gauss(y - z, tau) * (y - z) / tau
    }

    fn default_prob(&self, _s: f64, _t: f64, _z: f64) -> f64 {
        0.0
    }

    fn default_prob_dz(&self, _s: f64, _t: f64, _z: f64) -> f64 {
        0.0
    }

    fn log_density_dz(&self, s: f64, t: f64, z: f64, y: f64) -> f64 {
        (y - z) / (t - s)
    }

    fn log_default_dz(&self, _s: f64, _t: f64, _z: f64) -> f64 {
        0.0
    }

    fn name(&self) -> &str {
        "brownian"
    }
}

#[derive(Clone, Debug)]
pub struct KilledBrownianKernel {
    domain: Domain,
}

impl KilledBrownianKernel {
    pub fn new(ell: f64, z_upper: f64) -> Result<Self> {
        Ok(Self { domain: Domain::killed(ell, z_upper)? })
    }

    pub fn ell(&self) -> f64 {
        self.domain.ell
    }
}

impl TransitionKernel for KilledBrownianKernel {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn density(&self, s: f64, t: f64, z: f64, y: f64) -> f64 {
        let tau = t - s;
        let ell = self.domain.ell;
        if tau <= 0.0 || z <= ell || y <= ell {
            return 0.0;
        }
        killed_q(tau, z, y, ell)
    }

    fn density_dz(&self, s: f64, t: f64, z: f64, y: f64) -> f64 {
        let tau = t - s;
        let ell = self.domain.ell;
        if tau <= 0.0 || z < ell || y <= ell {
            return 0.0;
        }
        let a = y - z;
        let b = y + z - 2.0 * ell;
        let k = 2.0 * (y - ell) * (z - ell) / tau;
        gauss(a, tau) * (a + b * (-k).exp()) / tau
    }

    fn default_prob(&self, s: f64, t: f64, z: f64) -> f64 {
        let tau = t - s;
        let ell = self.domain.ell;
        if z <= ell {
            return 1.0;
        }
        if tau <= 0.0 {
            return 0.0;
        }
        killed_l(tau, z, ell)
    }

    fn default_prob_dz(&self, s: f64, t: f64, z: f64) -> f64 {
        let tau = t - s;
        let ell = self.domain.ell;
        if tau <= 0.0 || z < ell {
            return 0.0;
        }
        let st = tau.sqrt();
        -2.0 * norm_pdf((z - ell) / st) / st
    }

    fn log_density_dz(&self, s: f64, t: f64, z: f64, y: f64) -> f64 {
        let tau = t - s;
        let ell = self.domain.ell;
        let a = y - z;
        let b = y + z - 2.0 * ell;
        let k = 2.0 * (y - ell) * (z - ell) / tau;
        (a + b * (-k).exp()) / (tau * -(-k).exp_m1())
    }

    fn log_default_dz(&self, s: f64, t: f64, z: f64) -> f64 {
        let st = (t - s).sqrt();
        -inv_mills((z - self.domain.ell) / st) / st
    }

    fn name(&self) -> &str {
        "killed_brownian"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_values() {
        assert_relative_eq!(bm_density(0.0, 1.0, 0.0, 0.0).unwrap(), 0.398_942_280_401_432_7, epsilon = 1e-15);
        assert_relative_eq!(killed_bm_density(0.0, 1.0, 1.0, 1.0, 0.0).unwrap(), 0.344_951_313_888_2, epsilon = 1e-12);
        assert_relative_eq!(default_prob(0.0, 1.0, 1.0, 0.0).unwrap(), 0.317_310_507_862_914_1, epsilon = 1e-15);
    }

    #[test]
    fn argument_checks() {
        assert!(matches!(bm_density(1.0, 1.0, 0.0, 0.0), Err(Error::TimeOrder { .. })));
        assert!(matches!(bm_density(0.5, 0.2, 0.0, 0.0), Err(Error::TimeOrder { .. })));
        assert!(killed_bm_density(0.0, 1.0, 0.0, 1.0, 0.0).is_err());
        assert!(killed_bm_density(0.0, 1.0, 1.0, -0.1, 0.0).is_err());
        assert!(default_prob(0.0, 1.0, -1e-9, 0.0).is_err());
        assert_eq!(default_prob(0.0, 1.0, 0.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn vanishes_at_the_boundary() {
        let k = KilledBrownianKernel::new(0.0, 8.0).unwrap();
        for y in [0.1, 1.0, 3.0] {
            assert!(k.density(0.0, 1.0, 1e-8, y) < 1e-6);
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let k = KilledBrownianKernel::new(-0.5, 8.0).unwrap();
        let h = 1e-6;
        for &(z, y, s) in &[(0.3, 1.1, 0.2), (1.5, -0.2, 0.6), (-0.4, 0.8, 0.0)] {
            let fd = (k.density(s, 1.0, z + h, y) - k.density(s, 1.0, z - h, y)) / (2.0 * h);
            assert_relative_eq!(k.density_dz(s, 1.0, z, y), fd, max_relative = 1e-6);
            assert_relative_eq!(
                k.log_density_dz(s, 1.0, z, y),
                k.density_dz(s, 1.0, z, y) / k.density(s, 1.0, z, y),
                max_relative = 1e-10
            );
            let fdl = (k.default_prob(s, 1.0, z + h) - k.default_prob(s, 1.0, z - h)) / (2.0 * h);
            assert_relative_eq!(k.default_prob_dz(s, 1.0, z), fdl, max_relative = 1e-6);
            assert_relative_eq!(
                k.log_default_dz(s, 1.0, z),
                k.default_prob_dz(s, 1.0, z) / k.default_prob(s, 1.0, z),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn log_derivatives_stay_finite_in_the_tails() {
        let k = KilledBrownianKernel::new(0.0, 8.0).unwrap();
        let v = k.log_default_dz(0.999, 1.0, 3.0);
        assert!(v.is_finite() && v < -90.0);
        let w = k.log_density_dz(0.999_9, 1.0, 5.0, 0.5);
        assert!(w.is_finite());
        assert_relative_eq!(w, -4.5 / 1e-4, max_relative = 1e-6);
    }
}
