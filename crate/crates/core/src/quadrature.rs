//! Quadrature grids on the state space and discrete measures built on them.

use crate::error::{Error, Result};
use crate::kernels::Domain;

/// Nodes and positive weights on `E`. When `ell` is finite the grid also carries
/// an implicit atom at `ell`, which is not one of `nodes`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub ell: f64,
}

impl QuadratureGrid {
    /// Uniform grid with `n` nodes over `[max(ell + d, -z_upper), z_upper]`.
    ///
    /// Free ends use trapezoid weights. A finite killing boundary inside the window
    /// is treated as a virtual node where the integrand vanishes, with the
    /// third-order Gregory end correction `(3/8, 7/6, 23/24)`, so densities that
    /// vanish linearly at `ell` are integrated to O(d^4).
    pub fn uniform(domain: &Domain, n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::InvalidParameter {
                name: "nodes",
                reason: format!("need at least 8 grid nodes, got {n}"),
            });
        }
        let hi = domain.z_upper;
        let boundary_inside = domain.is_killed() && domain.ell > -hi;
        let (nodes, mut weights) = if boundary_inside {
            let d = (hi - domain.ell) / n as f64;
            let nodes: Vec<f64> = (1..=n).map(|k| domain.ell + k as f64 * d).collect();
            let mut w = vec![d; n];
            w[0] *= 7.0 / 6.0;
            w[1] *= 23.0 / 24.0;
            (nodes, w)
        } else {
            let lo = -hi;
            let d = (hi - lo) / (n - 1) as f64;
            let nodes: Vec<f64> = (0..n).map(|k| lo + k as f64 * d).collect();
            let mut w = vec![d; n];
            w[0] *= 0.5;
            (nodes, w)
        };
        *weights.last_mut().unwrap() *= 0.5;
        if let Some(last) = nodes.last() {
            debug_assert!((last - hi).abs() < 1e-9 * hi.abs().max(1.0));
        }
        Ok(Self { nodes, weights, ell: domain.ell })
    }

    /// Composite Gauss–Legendre rule on `[a, b]`; carries no atom.
    pub fn gauss_legendre(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let (x, w) = legendre_rule(order);
        let width = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * width;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(mid + 0.5 * width * xi);
                weights.push(0.5 * width * wi);
            }
        }
        Self { nodes, weights, ell: f64::NEG_INFINITY }
    }

    #[inline]
    pub fn has_atom(&self) -> bool {
        self.ell.is_finite()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// A finite measure on `E` plus an optional atom at `ell`: masses are
/// `density[i] * weights[i]` on the nodes and `atom_mass` at `ell`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    pub grid: QuadratureGrid,
    pub density: Vec<f64>,
    pub atom_mass: f64,
}

impl DiscreteMeasure {
    pub fn new(grid: QuadratureGrid, density: Vec<f64>, atom_mass: f64) -> Result<Self> {
        if density.len() != grid.len() {
            return Err(Error::Shape(format!(
                "density has {} values for {} nodes",
                density.len(),
                grid.len()
            )));
        }
        if !grid.has_atom() && atom_mass != 0.0 {
            return Err(Error::Shape("atom mass on a grid without a killing boundary".into()));
        }
        if density.iter().any(|d| !(*d >= 0.0)) || !(atom_mass >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "density",
                reason: "measure must be non-negative".into(),
            });
        }
        Ok(Self { grid, density, atom_mass })
    }

    pub fn from_fn(grid: QuadratureGrid, f: impl Fn(f64) -> f64, atom_mass: f64) -> Result<Self> {
        let density = grid.nodes.iter().map(|&x| f(x)).collect();
        Self::new(grid, density, atom_mass)
    }

    /// Support points, with the atom first when the grid carries one.
    pub fn support(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        if self.grid.has_atom() {
            v.push(self.grid.ell);
        }
        v.extend_from_slice(&self.grid.nodes);
        v
    }

    /// Point masses aligned with [`support`](Self::support).
    pub fn masses(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        if self.grid.has_atom() {
            v.push(self.atom_mass);
        }
        v.extend(self.density.iter().zip(&self.grid.weights).map(|(d, w)| d * w));
        v
    }

    /// Quadrature weights aligned with the support; the atom has weight one.
    pub fn quad_weights(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        if self.grid.has_atom() {
            v.push(1.0);
        }
        v.extend_from_slice(&self.grid.weights);
        v
    }

    /// Number of support points including the atom slot.
    pub fn len(&self) -> usize {
        self.grid.len() + usize::from(self.grid.has_atom())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn atom_index(&self) -> Option<usize> {
        self.grid.has_atom().then_some(0)
    }

    pub fn total_mass(&self) -> f64 {
        self.masses().iter().sum()
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.support().iter().zip(self.masses()).map(|(&x, m)| m * f(x)).sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        let m = self.total_mass();
        if !(m > 0.0) {
            return Err(Error::EmptyMeasure { mass: m });
        }
        Ok(Self {
            grid: self.grid.clone(),
            density: self.density.iter().map(|d| d / m).collect(),
            atom_mass: self.atom_mass / m,
        })
    }
}

/// Standard normal law on a free grid.
pub fn gaussian_measure(grid: QuadratureGrid) -> Result<DiscreteMeasure> {
    DiscreteMeasure::from_fn(grid, crate::special::norm_pdf, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::norm_pdf;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let (x, w) = legendre_rule(7);
        for p in 0..14 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            assert_relative_eq!(q, exact, epsilon = 1e-14);
        }
        let (x1, w1) = legendre_rule(1);
        assert_eq!((x1[0], w1[0]), (0.0, 2.0));
    }

    #[test]
    fn free_grid_integrates_gaussian() {
        let g = QuadratureGrid::uniform(&Domain::free(8.0).unwrap(), 1601).unwrap();
        assert_relative_eq!(g.integrate(norm_pdf), 1.0, epsilon = 1e-14);
        assert_relative_eq!(g.nodes[0], -8.0);
        assert_relative_eq!(g.nodes[1600], 8.0);
        assert_relative_eq!(g.nodes[800], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn killed_grid_is_fourth_order_at_the_boundary() {
        // x * exp(-x^2) on (0, 8]: vanishes linearly at 0, negligible at 8.
        let exact = 0.5;
        let err = |n| {
            let g = QuadratureGrid::uniform(&Domain::killed(0.0, 8.0).unwrap(), n).unwrap();
            (g.integrate(|x| x * (-x * x).exp()) - exact).abs()
        };
        let (e1, e2) = (err(800), err(1600));
        assert!(e1 / e2 > 12.0, "ratio {}", e1 / e2);
        assert!(e2 < 1e-8);
    }

    #[test]
    fn measure_bookkeeping() {
        let g = QuadratureGrid::uniform(&Domain::killed(0.0, 8.0).unwrap(), 64).unwrap();
        let m = DiscreteMeasure::from_fn(g, |_| 0.1, 0.2).unwrap();
        assert_eq!(m.len(), 65);
        assert_eq!(m.support()[0], 0.0);
        assert_eq!(m.masses()[0], 0.2);
        assert_eq!(m.quad_weights()[0], 1.0);
        let n = m.normalized().unwrap();
        assert_relative_eq!(n.total_mass(), 1.0, epsilon = 1e-14);
        assert!(DiscreteMeasure::new(n.grid.clone(), vec![-1.0; 64], 0.0).is_err());
    }
}
