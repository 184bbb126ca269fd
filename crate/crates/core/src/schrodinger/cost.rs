use std::fmt;
use std::sync::Arc;

/// Insider payoff map `F` applied to the signal.
#[derive(Clone)]
pub enum Payoff {
    Identity,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Payoff {
    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Payoff::Identity => z,
            Payoff::Custom(f) => f(z),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Payoff::Identity)
    }
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::Identity => write!(f, "Identity"),
            Payoff::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Transport cost between the signal `z` (first marginal) and the order flow `y`
/// (second marginal).
#[derive(Clone)]
pub enum CostSpec {
    /// `(F(z) - y)^2 / 2`. With the identity payoff this is also the killed-case
    /// cost `d(z, y)^2 / 2`, the atom sitting at coordinate `ell`.
    Quadratic(Payoff),
    /// `-F(z) y`; its potentials are directly the Kyle potentials.
    Bilinear(Payoff),
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl CostSpec {
    #[inline]
    pub fn eval(&self, z: f64, y: f64) -> f64 {
        match self {
            CostSpec::Quadratic(p) => 0.5 * (p.apply(z) - y).powi(2),
            CostSpec::Bilinear(p) => -p.apply(z) * y,
            CostSpec::Custom(c) => c(z, y),
        }
    }

    pub fn payoff(&self) -> Option<&Payoff> {
        match self {
            CostSpec::Quadratic(p) | CostSpec::Bilinear(p) => Some(p),
            CostSpec::Custom(_) => None,
        }
    }

    /// Offsets `(a(z), b(y))` with `cost = -F(z) y + a(z) + b(y)`, so that transport
    /// potentials map to Kyle potentials by `phi_F = phi - a`, `zeta = psi - b`.
    pub fn kyle_offsets(&self, z: f64, y: f64) -> (f64, f64) {
        match self {
            CostSpec::Quadratic(p) => (0.5 * p.apply(z).powi(2), 0.5 * y * y),
            CostSpec::Bilinear(_) | CostSpec::Custom(_) => (0.0, 0.0),
        }
    }
}

impl fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostSpec::Quadratic(p) => write!(f, "Quadratic({p:?})"),
            CostSpec::Bilinear(p) => write!(f, "Bilinear({p:?})"),
            CostSpec::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_and_bilinear_differ_by_separable_terms() {
        let q = CostSpec::Quadratic(Payoff::Identity);
        let b = CostSpec::Bilinear(Payoff::Identity);
        for &(z, y) in &[(0.3, -1.2), (2.0, 0.5), (-4.0, 3.0)] {
            let (a, c) = q.kyle_offsets(z, y);
            assert!((q.eval(z, y) - (b.eval(z, y) + a + c)).abs() < 1e-14);
        }
    }
}
