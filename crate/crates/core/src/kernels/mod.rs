//! Transition kernels of the signal diffusion: densities on the state space,
//! default (absorption) probabilities, and their first derivatives in the
//! starting point.

mod analytic;
mod fd;
mod product;
mod validate;

pub use analytic::{bm_density, default_prob, killed_bm_density, BrownianKernel, KilledBrownianKernel};
pub use fd::{FdKernel, FdSpec};
pub use product::{ProductKernel, ProductMass};
pub use validate::{default_lattice, validate_kernel, KernelValidation, ValidationPoint, ValidationRow};

use crate::error::{Error, Result};

/// State space `(ell, z_upper]` of the signal. `ell = -inf` means no killing;
/// `z_upper` is a numerical truncation, not an absorbing barrier of the model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub ell: f64,
    pub z_upper: f64,
}

impl Domain {
    pub fn free(z_upper: f64) -> Result<Self> {
        Self::new(f64::NEG_INFINITY, z_upper)
    }

    pub fn killed(ell: f64, z_upper: f64) -> Result<Self> {
        if !ell.is_finite() {
            return Err(Error::InvalidParameter {
                name: "ell",
                reason: "killing boundary must be finite".into(),
            });
        }
        Self::new(ell, z_upper)
    }

    pub fn new(ell: f64, z_upper: f64) -> Result<Self> {
        if !(z_upper.is_finite() && ell < z_upper) || ell.is_nan() {
            return Err(Error::InvalidDomain { ell, z_upper });
        }
        Ok(Self { ell, z_upper })
    }

    #[inline]
    pub fn is_killed(&self) -> bool {
        self.ell.is_finite()
    }

    /// Lower edge of the numerical window: `ell` when it is finite and inside
    /// `[-z_upper, z_upper]`, otherwise `-z_upper`.
    pub fn lower(&self) -> f64 {
        if self.is_killed() && self.ell > -self.z_upper {
            self.ell
        } else {
            -self.z_upper
        }
    }

    /// `true` for points of `E = (ell, inf)`.
    #[inline]
    pub fn contains(&self, z: f64) -> bool {
        z > self.ell
    }
}

/// A Markov transition kernel restricted to `E`, with the default mass sent to the
/// cemetery state `ell`. Arguments follow `q(s, t; z, y)`: start time `s`, end time
/// `t`, start point `z`, end point `y`.
///
/// Methods are total: states at or below `ell` give zero density and default
/// probability one, and `t <= s` gives zero density.
pub trait TransitionKernel: Send + Sync {
    fn domain(&self) -> &Domain;

    fn density(&self, s: f64, t: f64, z: f64, y: f64) -> f64;

    fn density_dz(&self, s: f64, t: f64, z: f64, y: f64) -> f64;

    fn default_prob(&self, s: f64, t: f64, z: f64) -> f64;

    fn default_prob_dz(&self, s: f64, t: f64, z: f64) -> f64;

    /// `d/dz log q(s,t;z,y)`.
    fn log_density_dz(&self, s: f64, t: f64, z: f64, y: f64) -> f64 {
        self.density_dz(s, t, z, y) / self.density(s, t, z, y)
    }

    /// `d/dz log L(s,t;z)`.
    fn log_default_dz(&self, s: f64, t: f64, z: f64) -> f64 {
        self.default_prob_dz(s, t, z) / self.default_prob(s, t, z)
    }

    fn drift(&self, _t: f64, _z: f64) -> f64 {
        0.0
    }

    fn sigma(&self, _t: f64, _z: f64) -> f64 {
        1.0
    }

    /// Interval outside which the density is identically zero.
    fn support(&self) -> (f64, f64) {
        (self.domain().ell, f64::INFINITY)
    }

    /// Whether `density_dz` is exact (closed form) rather than an interpolant.
    fn exact_derivatives(&self) -> bool {
        true
    }

    fn name(&self) -> &str;

    /// Time step of a grid-based kernel; lags are exact on multiples of it.
    fn time_step(&self) -> Option<f64> {
        None
    }

    fn density_row(&self, s: f64, t: f64, z: f64, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.density(s, t, z, y)).collect()
    }

    fn density_dz_row(&self, s: f64, t: f64, z: f64, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.density_dz(s, t, z, y)).collect()
    }

    fn density_col(&self, s: f64, t: f64, zs: &[f64], y: f64) -> Vec<f64> {
        zs.iter().map(|&z| self.density(s, t, z, y)).collect()
    }
}

/// Terminal law of the signal at time one: density `q(0,1;z0,.)` on the grid
/// nodes plus the default atom `L(0,1;z0)` when the grid carries one.
pub fn eta_measure(
    kernel: &dyn TransitionKernel,
    grid: &crate::quadrature::QuadratureGrid,
    z0: f64,
) -> Result<crate::quadrature::DiscreteMeasure> {
    let dom = kernel.domain();
    if !dom.contains(z0) {
        return Err(Error::OutsideDomain { value: z0, ell: dom.ell });
    }
    let density = kernel.density_row(0.0, 1.0, z0, &grid.nodes);
    let atom = if grid.has_atom() { kernel.default_prob(0.0, 1.0, z0) } else { 0.0 };
    crate::quadrature::DiscreteMeasure::new(grid.clone(), density, atom)
}
