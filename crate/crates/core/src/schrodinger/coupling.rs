//! Coupling densities `f = d mu / d(eta x eta)` on discrete supports, with an
//! exact extension to off-support first coordinates.

use std::sync::Arc;

use ndarray::Array2;

use super::cost::CostSpec;
use crate::error::{Error, Result};
use crate::quadrature::DiscreteMeasure;
use crate::special::log_sum_exp;

/// Support points, masses and quadrature weights of one marginal, atom first.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginal {
    pub points: Vec<f64>,
    pub mass: Vec<f64>,
    pub weights: Vec<f64>,
    pub has_atom: bool,
    pub ell: f64,
}

impl Marginal {
    pub fn from_measure(m: &DiscreteMeasure) -> Self {
        Self {
            points: m.support(),
            mass: m.masses(),
            weights: m.quad_weights(),
            has_atom: m.grid.has_atom(),
            ell: m.grid.ell,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Index of `x` if it is a support point (exact match, atom included).
    pub fn index_of(&self, x: f64) -> Option<usize> {
        if self.has_atom && x <= self.ell {
            return Some(0);
        }
        let start = usize::from(self.has_atom);
        let pts = &self.points[start..];
        let pos = pts.partition_point(|&p| p < x);
        (pos < pts.len() && pts[pos] == x).then_some(pos + start)
    }
}

#[derive(Clone)]
enum Extension {
    /// Row of the entropic plan at an arbitrary `z`, normalised so `f1(z) = 1`.
    Potentials { psi: Vec<f64>, log_mass: Vec<f64>, cost: CostSpec, eps: f64 },
    Function(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
    Product,
}

/// Density `f(z, y)` of a coupling with respect to `mu x nu` on discrete supports.
#[derive(Clone)]
pub struct Coupling {
    pub z: Marginal,
    pub y: Marginal,
    pub f: Array2<f64>,
    /// `f1(z_a) = sum_b f(z_a, y_b) nu_b`.
    pub f1: Vec<f64>,
    /// `f2(y_b) = sum_a f(z_a, y_b) mu_a`.
    pub f2: Vec<f64>,
    ext: Extension,
    ext_scale: f64,
}

impl std::fmt::Debug for Coupling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Coupling")
            .field("nz", &self.z.len())
            .field("ny", &self.y.len())
            .finish()
    }
}

impl Coupling {
    fn assemble(z: Marginal, y: Marginal, f: Array2<f64>, ext: Extension) -> Self {
        let f1 = f.rows().into_iter().map(|r| r.iter().zip(&y.mass).map(|(a, b)| a * b).sum()).collect();
        let f2 = f
            .columns()
            .into_iter()
            .map(|c| c.iter().zip(&z.mass).map(|(a, b)| a * b).sum())
            .collect();
        Self { z, y, f, f1, f2, ext, ext_scale: 1.0 }
    }

    /// `f = 1`: the independent coupling.
    pub fn product(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Self {
        let (z, y) = (Marginal::from_measure(mu), Marginal::from_measure(nu));
        let f = Array2::from_elem((z.len(), y.len()), 1.0);
        Self::assemble(z, y, f, Extension::Product)
    }

    /// Density given in closed form; it is evaluated on the supports and kept for
    /// off-support rows.
    pub fn from_fn(
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let (z, y) = (Marginal::from_measure(mu), Marginal::from_measure(nu));
        let mat = Array2::from_shape_fn((z.len(), y.len()), |(a, b)| f(z.points[a], y.points[b]));
        Self::assemble(z, y, mat, Extension::Function(Arc::new(f)))
    }

    pub(crate) fn from_potentials(
        z: Marginal,
        y: Marginal,
        f: Array2<f64>,
        psi: Vec<f64>,
        cost: CostSpec,
        eps: f64,
    ) -> Self {
        let log_mass = y.mass.iter().map(|m| m.ln()).collect();
        Self::assemble(z, y, f, Extension::Potentials { psi, log_mass, cost, eps })
    }

    /// `f(z, y_b)` over the second support. Support points use the stored row.
    pub fn row_at(&self, z: f64) -> Vec<f64> {
        if let Some(a) = self.z.index_of(z) {
            return self.f.row(a).to_vec();
        }
        let k = self.ext_scale;
        match &self.ext {
            Extension::Product => vec![k; self.y.len()],
            Extension::Function(g) => self.y.points.iter().map(|&y| k * g(z, y)).collect(),
            Extension::Potentials { psi, log_mass, cost, eps } => {
                let e: Vec<f64> = self
                    .y
                    .points
                    .iter()
                    .zip(psi)
                    .map(|(&y, p)| (p - cost.eval(z, y)) / eps)
                    .collect();
                let lse = log_sum_exp(e.iter().zip(log_mass).map(|(a, b)| a + b));
                e.iter().map(|v| k * (v - lse).exp()).collect()
            }
        }
    }

    /// `f1` at an arbitrary first coordinate.
    pub fn f1_at(&self, z: f64) -> f64 {
        self.row_at(z).iter().zip(&self.y.mass).map(|(a, b)| a * b).sum()
    }

    /// The plan `f(z_a, y_b) mu_a nu_b` as a joint measure.
    pub fn joint(&self) -> JointMeasure {
        let mut mass = self.f.clone();
        for (a, mut row) in mass.rows_mut().into_iter().enumerate() {
            let ma = self.z.mass[a];
            row.iter_mut().zip(&self.y.mass).for_each(|(v, mb)| *v *= ma * mb);
        }
        JointMeasure { z: self.z.points.clone(), y: self.y.points.clone(), mass, z_atom: self.z.has_atom, y_atom: self.y.has_atom }
    }

    /// `H(mu1 | mu x nu) = sum f log f mu_a nu_b`.
    pub fn relative_entropy(&self) -> f64 {
        let mut h = 0.0;
        for (row, ma) in self.f.rows().into_iter().zip(&self.z.mass) {
            for (v, mb) in row.iter().zip(&self.y.mass) {
                if *v > 0.0 {
                    h += v * v.ln() * ma * mb;
                }
            }
        }
        h
    }

    /// `f1` and `f2` deviations from one in `L^1(eta)`.
    pub fn marginal_defects(&self) -> (f64, f64) {
        let d1 = self.f1.iter().zip(&self.z.mass).map(|(f, m)| (f - 1.0).abs() * m).sum();
        let d2 = self.f2.iter().zip(&self.y.mass).map(|(f, m)| (f - 1.0).abs() * m).sum();
        (d1, d2)
    }

    /// Normalises `f` to total plan mass one.
    pub fn normalized(mut self) -> Result<Self> {
        let total: f64 = self.f1.iter().zip(&self.z.mass).map(|(f, m)| f * m).sum();
        if !(total > 0.0) {
            return Err(Error::EmptyMeasure { mass: total });
        }
        self.f.mapv_inplace(|v| v / total);
        self.f1.iter_mut().for_each(|v| *v /= total);
        self.f2.iter_mut().for_each(|v| *v /= total);
        self.ext_scale /= total;
        Ok(self)
    }
}

/// A probability on the product of the two supports.
#[derive(Clone, Debug)]
pub struct JointMeasure {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub mass: Array2<f64>,
    pub z_atom: bool,
    pub y_atom: bool,
}

/// Masses of the four strata `E x E`, `E x {ell}`, `{ell} x E`, `{ell} x {ell}`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StrataMasses {
    pub interior: f64,
    pub y_absorbed: f64,
    pub z_absorbed: f64,
    pub both_absorbed: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub mean_z: f64,
    pub mean_y: f64,
    pub var_z: f64,
    pub var_y: f64,
    pub cov: f64,
}

impl Moments {
    pub fn corr(&self) -> f64 {
        self.cov / (self.var_z * self.var_y).sqrt()
    }
}

impl JointMeasure {
    pub fn total(&self) -> f64 {
        self.mass.sum()
    }

    pub fn strata(&self) -> StrataMasses {
        let mut s = StrataMasses::default();
        for ((a, b), &m) in self.mass.indexed_iter() {
            let za = self.z_atom && a == 0;
            let yb = self.y_atom && b == 0;
            match (za, yb) {
                (false, false) => s.interior += m,
                (false, true) => s.y_absorbed += m,
                (true, false) => s.z_absorbed += m,
                (true, true) => s.both_absorbed += m,
            }
        }
        s
    }

    pub fn moments(&self) -> Moments {
        let t = self.total();
        let (mut mz, mut my) = (0.0, 0.0);
        for ((a, b), &m) in self.mass.indexed_iter() {
            mz += m * self.z[a];
            my += m * self.y[b];
        }
        mz /= t;
        my /= t;
        let (mut vz, mut vy, mut c) = (0.0, 0.0, 0.0);
        for ((a, b), &m) in self.mass.indexed_iter() {
            let (dz, dy) = (self.z[a] - mz, self.y[b] - my);
            vz += m * dz * dz;
            vy += m * dy * dy;
            c += m * dz * dy;
        }
        Moments { mean_z: mz, mean_y: my, var_z: vz / t, var_y: vy / t, cov: c / t }
    }
}

/// Diagnostics of the terminal coupling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingDiagnostics {
    pub total_mass: f64,
    pub f1_defect: f64,
    pub f2_defect: f64,
    pub strata: StrataMasses,
    pub max_abs_log_f: f64,
}

/// Builds the terminal law `f(z, y) eta(dz) eta(dy)` and its diagnostics.
pub fn mu1_eps_build(coupling: &Coupling) -> (JointMeasure, CouplingDiagnostics) {
    let joint = coupling.joint();
    let (f1_defect, f2_defect) = coupling.marginal_defects();
    let max_abs_log_f = coupling.f.iter().filter(|v| **v > 0.0).map(|v| v.ln().abs()).fold(0.0, f64::max);
    let diag = CouplingDiagnostics {
        total_mass: joint.total(),
        f1_defect,
        f2_defect,
        strata: joint.strata(),
        max_abs_log_f,
    };
    (joint, diag)
}
