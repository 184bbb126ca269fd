//! Closed forms for a standard normal signal, identity payoff and no killing.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianClosedForm {
    pub eps: f64,
    /// Positive root of `lambda^2 + eps lambda - 1 = 0`.
    pub lambda: f64,
}

pub fn gaussian_closed_form(eps: f64) -> Result<GaussianClosedForm> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter { name: "eps", reason: format!("must be positive, got {eps}") });
    }
    // 2 / (eps + sqrt(eps^2 + 4)) avoids cancellation for large eps
    let lambda = 2.0 / (eps + (eps * eps + 4.0).sqrt());
    Ok(GaussianClosedForm { eps, lambda })
}

impl GaussianClosedForm {
    pub fn phi_f(&self, z: f64) -> f64 {
        let (e, l) = (self.eps, self.lambda);
        -0.5 * e * (e / (e + l)).ln() - z * z / (2.0 * (e + l))
    }

    pub fn zeta(&self, y: f64) -> f64 {
        -0.5 * self.lambda * y * y
    }

    /// Density of the optimal coupling against the product of standard normals.
    pub fn density(&self, z: f64, y: f64) -> f64 {
        ((self.phi_f(z) + self.zeta(y) + z * y) / self.eps).exp()
    }

    /// Correlation of the optimal coupling.
    pub fn corr(&self) -> f64 {
        self.lambda
    }

    /// Relative entropy of the optimal coupling to the product law.
    pub fn entropy(&self) -> f64 {
        -0.5 * (self.eps * self.lambda).ln()
    }

    /// Value of private information, `-E phi_F - E zeta` under the standard normal.
    pub fn value(&self) -> f64 {
        0.5 * self.eps * (self.eps * self.lambda).ln() + self.lambda
    }

    /// Equilibrium insider drift on the order flow.
    pub fn insider_drift(&self, t: f64, z1: f64, y: f64) -> f64 {
        let l = self.lambda;
        l * (z1 - l * y) / (1.0 - t * l * l)
    }
}
