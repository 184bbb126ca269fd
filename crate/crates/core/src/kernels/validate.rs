//! Conservation and Chapman–Kolmogorov checks for a transition kernel, using an
//! independent Gauss–Legendre rule rather than the kernel's own grid.

use super::TransitionKernel;
use crate::error::{Error, Result};
use crate::quadrature::QuadratureGrid;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationPoint {
    pub s: f64,
    pub z: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationRow {
    pub s: f64,
    pub z: f64,
    /// `|int q(s,1;z,y) dy + L(s,1;z) - 1|`.
    pub mass_error: f64,
    /// Largest Chapman–Kolmogorov defect through `u = (s+1)/2` over the `y` lattice,
    /// including the absorbed part.
    pub ck_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelValidation {
    pub rows: Vec<ValidationRow>,
    pub max_mass_error: f64,
    pub max_ck_error: f64,
    pub threshold: f64,
}

impl KernelValidation {
    pub fn passed(&self) -> bool {
        self.max_mass_error <= self.threshold && self.max_ck_error <= self.threshold
    }

    /// Columns `s, z, mass_error, ck_error`.
    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "s,z,mass_error,ck_error")?;
        for r in &self.rows {
            writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", r.s, r.z, r.mass_error, r.ck_error)?;
        }
        Ok(())
    }

    pub fn ensure(&self) -> Result<()> {
        if self.max_mass_error > self.threshold {
            return Err(Error::ValidationFailed {
                what: "conservation",
                error: self.max_mass_error,
                threshold: self.threshold,
            });
        }
        if self.max_ck_error > self.threshold {
            return Err(Error::ValidationFailed {
                what: "Chapman-Kolmogorov",
                error: self.max_ck_error,
                threshold: self.threshold,
            });
        }
        Ok(())
    }
}

/// Default lattice: `s` in {0, 0.5, 0.9} and `z` on a 0.5-spaced lattice of
/// `[-4, 4]` inside the state space.
pub fn default_lattice(kernel: &dyn TransitionKernel) -> Vec<ValidationPoint> {
    let dom = kernel.domain();
    let mut out = Vec::new();
    for s in [0.0, 0.5, 0.9] {
        for k in 0..=16 {
            let z = -4.0 + 0.5 * k as f64;
            if z > dom.ell + 0.25 && z < dom.z_upper {
                out.push(ValidationPoint { s, z });
            }
        }
    }
    out
}

fn sigma_bound(kernel: &dyn TransitionKernel) -> f64 {
    let (lo, hi) = kernel.support();
    let lo = lo.max(-kernel.domain().z_upper);
    let hi = hi.min(kernel.domain().z_upper);
    (0..=64)
        .map(|i| kernel.sigma(0.0, lo + (hi - lo) * i as f64 / 64.0).abs())
        .fold(0.0, f64::max)
}

fn window(kernel: &dyn TransitionKernel, a: f64, b: f64, half_width: f64, panel: f64) -> QuadratureGrid {
    let (lo, hi) = kernel.support();
    let lo = lo.max(a - half_width);
    let hi = hi.min(b + half_width);
    let panels = (((hi - lo) / panel).ceil() as usize).max(1);
    QuadratureGrid::gauss_legendre(lo, hi, panels, 16)
}

/// Runs both checks on `points`, with end time one. The `y` lattice for the
/// Chapman–Kolmogorov check is the set of `z` values in `points`.
pub fn validate_kernel(kernel: &dyn TransitionKernel, points: &[ValidationPoint], threshold: f64) -> KernelValidation {
    let sig = sigma_bound(kernel).max(1e-12);
    let mut ys: Vec<f64> = points.iter().map(|p| p.z).collect();
    ys.sort_by(f64::total_cmp);
    ys.dedup();

    let rows: Vec<ValidationRow> = points
        .iter()
        .map(|&ValidationPoint { s, z }| {
            let tau = 1.0 - s;
            let u = 0.5 * (s + 1.0);
            let reach = 14.0 * sig * tau.sqrt();
            let panel = 0.1 * sig * (0.5 * tau).sqrt();

            let g = window(kernel, z, z, reach, panel);
            let mass: f64 = kernel
                .density_row(s, 1.0, z, &g.nodes)
                .iter()
                .zip(&g.weights)
                .map(|(q, w)| q * w)
                .sum::<f64>()
                + kernel.default_prob(s, 1.0, z);
            let mass_error = (mass - 1.0).abs();

            let (y_min, y_max) = (ys[0].min(z), ys[ys.len() - 1].max(z));
            let g = window(kernel, y_min, y_max, reach, panel);
            let first = kernel.density_row(s, u, z, &g.nodes);
            let wq: Vec<f64> = first.iter().zip(&g.weights).map(|(q, w)| q * w).collect();
            let mut ck_error: f64 = 0.0;
            for &y in &ys {
                let second = kernel.density_col(u, 1.0, &g.nodes, y);
                let lhs: f64 = wq.iter().zip(&second).map(|(a, b)| a * b).sum();
                ck_error = ck_error.max((lhs - kernel.density(s, 1.0, z, y)).abs());
            }
            let absorbed: f64 = wq
                .iter()
                .zip(&g.nodes)
                .map(|(a, &x)| a * kernel.default_prob(u, 1.0, x))
                .sum::<f64>()
                + kernel.default_prob(s, u, z);
            ck_error = ck_error.max((absorbed - kernel.default_prob(s, 1.0, z)).abs());

            ValidationRow { s, z, mass_error, ck_error }
        })
        .collect();

    let max_mass_error = rows.iter().map(|r| r.mass_error).fold(0.0, f64::max);
    let max_ck_error = rows.iter().map(|r| r.ck_error).fold(0.0, f64::max);
    KernelValidation { rows, max_mass_error, max_ck_error, threshold }
}
