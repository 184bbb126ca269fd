//! Two independent copies of a kernel, as the reference law of `(Z, Y)`.

use std::sync::Arc;

use super::TransitionKernel;
use crate::quadrature::QuadratureGrid;

/// `p(s,t;(z,y),(z',y')) = q(s,t;z,z') q(s,t;y,y')`. An end coordinate at or
/// below `ell` stands for the absorbed state and contributes `L(s,t;.)`.
#[derive(Clone)]
pub struct ProductKernel {
    pub kernel: Arc<dyn TransitionKernel>,
}

/// Masses of the four strata reached from one starting point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProductMass {
    pub interior: f64,
    /// `Z` alive, `Y` absorbed.
    pub y_absorbed: f64,
    /// `Z` absorbed, `Y` alive.
    pub z_absorbed: f64,
    pub both_absorbed: f64,
}

impl ProductMass {
    pub fn total(&self) -> f64 {
        self.interior + self.y_absorbed + self.z_absorbed + self.both_absorbed
    }
}

impl ProductKernel {
    pub fn new(kernel: Arc<dyn TransitionKernel>) -> Self {
        Self { kernel }
    }

    fn factor(&self, s: f64, t: f64, x: f64, x1: f64) -> f64 {
        let ell = self.kernel.domain().ell;
        match (x <= ell, x1 <= ell) {
            (true, true) => 1.0,
            (true, false) => 0.0,
            (false, true) => self.kernel.default_prob(s, t, x),
            (false, false) => self.kernel.density(s, t, x, x1),
        }
    }

    pub fn eval(&self, s: f64, t: f64, from: (f64, f64), to: (f64, f64)) -> f64 {
        self.factor(s, t, from.0, to.0) * self.factor(s, t, from.1, to.1)
    }

    /// Strata masses by quadrature over `grid` (its atom, if any, is ignored).
    pub fn mass(&self, s: f64, t: f64, from: (f64, f64), grid: &QuadratureGrid) -> ProductMass {
        let k = self.kernel.as_ref();
        let alive = |x: f64| -> f64 { k.density_row(s, t, x, &grid.nodes).iter().zip(&grid.weights).map(|(q, w)| q * w).sum() };
        let dead = |x: f64| if k.domain().is_killed() { self.factor(s, t, x, k.domain().ell) } else { 0.0 };
        let (az, ay) = (alive(from.0), alive(from.1));
        let (dz, dy) = (dead(from.0), dead(from.1));
        ProductMass { interior: az * ay, y_absorbed: az * dy, z_absorbed: dz * ay, both_absorbed: dz * dy }
    }
}
