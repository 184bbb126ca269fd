//! Space-time harmonic functions generated by a terminal coupling, and the
//! drifts of the corresponding h-transforms.
//!
//! With `kappa_b(t, x) = q(t,1;x,p_b) w_b` on grid nodes and `L(t,1;x)` on the
//! atom, every field is a finite sum: `h(t,(z,y)) = sum_ab f_ab kappa_a(t,z) kappa_b(t,y)`
//! and `rho(t,y;z1) = sum_b f(z1, p_b) kappa_b(t,y)`. An absorbed argument `x <= ell`
//! selects the atom term alone.

mod limit;
mod table;

pub use limit::{gamma_drift, h0_eval, h0_grad};
pub use table::{DriftTable, RhoTable, SpaceAxis, TableDiagnostics, TargetTable, TimeLattice};

use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::TransitionKernel;
use crate::schrodinger::{Coupling, Marginal};

/// Whether `rho` is divided by `f1(z1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RhoNorm {
    Raw,
    ByMarginal,
}

/// Which field a log-gradient refers to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Field {
    /// `h(t, (z, y))`, gradient in both coordinates.
    H,
    /// `rho(t, y; z1)`, gradient in `y`.
    Rho { z1: f64, norm: RhoNorm },
    /// Marginal `pi^1(t, y)` of the order-flow coordinate.
    Pi1,
    /// Marginal `pi^2(t, z)` of the signal coordinate.
    Pi2,
    /// Diagonal limit `h0(t, (z, y))`.
    H0,
}

/// `(d/dz, d/dy) log field`; unused components are zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogGrad {
    pub dz: f64,
    pub dy: f64,
}

#[derive(Clone)]
pub struct BridgeFields {
    pub kernel: Arc<dyn TransitionKernel>,
    pub coupling: Arc<Coupling>,
    pub z0: f64,
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::InvalidParameter { name: "t", reason: format!("need 0 <= t < 1, got {t}") });
    }
    Ok(())
}

/// `kappa_b(t, x)` over a support, with the same row for its `x`-derivative when asked.
pub(crate) fn kappa(kernel: &dyn TransitionKernel, m: &Marginal, t: f64, x: f64, dx: bool) -> Vec<f64> {
    let start = usize::from(m.has_atom);
    let mut out = Vec::with_capacity(m.len());
    let absorbed = m.has_atom && x <= m.ell;
    if m.has_atom {
        out.push(match (absorbed, dx) {
            (true, false) => 1.0,
            (true, true) => 0.0,
            (false, false) => kernel.default_prob(t, 1.0, x),
            (false, true) => kernel.default_prob_dz(t, 1.0, x),
        });
    }
    if absorbed {
        out.resize(m.len(), 0.0);
        return out;
    }
    let nodes = &m.points[start..];
    let row = if dx { kernel.density_dz_row(t, 1.0, x, nodes) } else { kernel.density_row(t, 1.0, x, nodes) };
    out.extend(row.iter().zip(&m.weights[start..]).map(|(q, w)| q * w));
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl BridgeFields {
    pub fn new(kernel: Arc<dyn TransitionKernel>, coupling: Arc<Coupling>, z0: f64) -> Result<Self> {
        if !kernel.domain().contains(z0) {
            return Err(Error::OutsideDomain { value: z0, ell: kernel.domain().ell });
        }
        Ok(Self { kernel, coupling, z0 })
    }

    fn k(&self) -> &dyn TransitionKernel {
        self.kernel.as_ref()
    }

    /// `g_a = sum_b f_ab v_b` for a vector over the second support.
    fn f_times(&self, v: &[f64]) -> Vec<f64> {
        self.coupling.f.rows().into_iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn h(&self, t: f64, z: f64, y: f64) -> Result<f64> {
        check_time(t)?;
        let kz = kappa(self.k(), &self.coupling.z, t, z, false);
        let ky = kappa(self.k(), &self.coupling.y, t, y, false);
        Ok(dot(&kz, &self.f_times(&ky)))
    }

    /// `h(t, (z_p, y_p))` for many states at once.
    pub fn h_many(&self, t: f64, z: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_time(t)?;
        if z.len() != y.len() {
            return Err(Error::Shape(format!("{} z values vs {} y values", z.len(), y.len())));
        }
        let (mz, my) = (&self.coupling.z, &self.coupling.y);
        let chunks: Vec<Vec<f64>> = z
            .par_chunks(1024)
            .zip(y.par_chunks(1024))
            .map(|(zc, yc)| {
                let mut kz = Array2::zeros((zc.len(), mz.len()));
                for (mut row, &x) in kz.rows_mut().into_iter().zip(zc) {
                    row.assign(&ArrayView1::from(&kappa(self.k(), mz, t, x, false)));
                }
                let kf = kz.dot(&self.coupling.f);
                kf.rows()
                    .into_iter()
                    .zip(yc)
                    .map(|(r, &x)| r.iter().zip(&kappa(self.k(), my, t, x, false)).map(|(a, b)| a * b).sum())
                    .collect()
            })
            .collect();
        Ok(chunks.concat())
    }

    /// `(h, dh/dz, dh/dy)`.
    pub fn h_grad(&self, t: f64, z: f64, y: f64) -> Result<(f64, f64, f64)> {
        check_time(t)?;
        let kz = kappa(self.k(), &self.coupling.z, t, z, false);
        let kzd = kappa(self.k(), &self.coupling.z, t, z, true);
        let ky = kappa(self.k(), &self.coupling.y, t, y, false);
        let kyd = kappa(self.k(), &self.coupling.y, t, y, true);
        let fy = self.f_times(&ky);
        let fyd = self.f_times(&kyd);
        Ok((dot(&kz, &fy), dot(&kzd, &fy), dot(&kz, &fyd)))
    }

    fn rho_scale(&self, z1: f64, norm: RhoNorm) -> Result<f64> {
        match norm {
            RhoNorm::Raw => Ok(1.0),
            RhoNorm::ByMarginal => {
                let f1 = self.coupling.f1_at(z1);
                if !(f1 > 0.0) {
                    return Err(Error::DegenerateTerminal(format!("f1({z1}) = {f1}")));
                }
                Ok(1.0 / f1)
            }
        }
    }

    /// `rho(t, y; z1)`.
    pub fn rho(&self, t: f64, y: f64, z1: f64, norm: RhoNorm) -> Result<f64> {
        check_time(t)?;
        let row = self.coupling.row_at(z1);
        let ky = kappa(self.k(), &self.coupling.y, t, y, false);
        Ok(dot(&row, &ky) * self.rho_scale(z1, norm)?)
    }

    /// `(rho, d rho / dy)`.
    pub fn rho_grad(&self, t: f64, y: f64, z1: f64, norm: RhoNorm) -> Result<(f64, f64)> {
        check_time(t)?;
        let row = self.coupling.row_at(z1);
        let s = self.rho_scale(z1, norm)?;
        let ky = kappa(self.k(), &self.coupling.y, t, y, false);
        let kyd = kappa(self.k(), &self.coupling.y, t, y, true);
        Ok((s * dot(&row, &ky), s * dot(&row, &kyd)))
    }

    /// Order-flow marginal by the Chapman–Kolmogorov reduction `sum_b f2_b kappa_b(t, y)`.
    pub fn pi1_collapsed(&self, t: f64, y: f64) -> Result<f64> {
        check_time(t)?;
        Ok(dot(&self.coupling.f2, &kappa(self.k(), &self.coupling.y, t, y, false)))
    }

    /// Signal marginal `sum_a f1_a kappa_a(t, z)`.
    pub fn pi2_collapsed(&self, t: f64, z: f64) -> Result<f64> {
        check_time(t)?;
        Ok(dot(&self.coupling.f1, &kappa(self.k(), &self.coupling.z, t, z, false)))
    }

    /// `pi^1(t, y) = E_R[h(t, (X_t, y))]`, integrating `h` against the reference law
    /// of the signal at time `t` on the coupling's own grid. At `t = 0` the reference
    /// law is the point mass at `z0`.
    pub fn pi1(&self, t: f64, y: f64) -> Result<f64> {
        check_time(t)?;
        let ky = kappa(self.k(), &self.coupling.y, t, y, false);
        let g = self.f_times(&ky);
        self.reference_average(t, &self.coupling.z, |kx| dot(kx, &g))
    }

    /// `pi^2(t, z) = E_R[h(t, (z, X_t))]`.
    pub fn pi2(&self, t: f64, z: f64) -> Result<f64> {
        check_time(t)?;
        let kz = kappa(self.k(), &self.coupling.z, t, z, false);
        let g: Vec<f64> = self.coupling.f.columns().into_iter().map(|c| c.iter().zip(&kz).map(|(a, b)| a * b).sum()).collect();
        self.reference_average(t, &self.coupling.y, |kx| dot(kx, &g))
    }

    fn reference_average(&self, t: f64, m: &Marginal, eval: impl Fn(&[f64]) -> f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(eval(&kappa(self.k(), m, 0.0, self.z0, false)));
        }
        let start = usize::from(m.has_atom);
        let nodes = &m.points[start..];
        let law = self.k().density_row(0.0, t, self.z0, nodes);
        let mut acc = 0.0;
        for (i, &x) in nodes.iter().enumerate() {
            let w = law[i] * m.weights[start + i];
            if w > 0.0 {
                acc += w * eval(&kappa(self.k(), m, t, x, false));
            }
        }
        if m.has_atom {
            let l = self.k().default_prob(0.0, t, self.z0);
            if l > 0.0 {
                acc += l * eval(&kappa(self.k(), m, t, m.ell, false));
            }
        }
        Ok(acc)
    }

    /// Log-gradient of a field. Closed-form kernel derivatives are used when the
    /// kernel has them; otherwise central differences with step `1e-4` times the
    /// width of the numerical window.
    pub fn grad_log(&self, field: Field, t: f64, z: f64, y: f64) -> Result<LogGrad> {
        if self.kernel.exact_derivatives() {
            self.grad_log_exact(field, t, z, y)
        } else {
            self.grad_log_fd(field, t, z, y)
        }
    }

    pub fn grad_log_exact(&self, field: Field, t: f64, z: f64, y: f64) -> Result<LogGrad> {
        match field {
            Field::H => {
                let (h, hz, hy) = self.h_grad(t, z, y)?;
                Ok(LogGrad { dz: hz / h, dy: hy / h })
            }
            Field::Rho { z1, norm } => {
                let (r, ry) = self.rho_grad(t, y, z1, norm)?;
                Ok(LogGrad { dz: 0.0, dy: ry / r })
            }
            Field::Pi1 => {
                check_time(t)?;
                let a = dot(&self.coupling.f2, &kappa(self.k(), &self.coupling.y, t, y, false));
                let b = dot(&self.coupling.f2, &kappa(self.k(), &self.coupling.y, t, y, true));
                Ok(LogGrad { dz: 0.0, dy: b / a })
            }
            Field::Pi2 => {
                check_time(t)?;
                let a = dot(&self.coupling.f1, &kappa(self.k(), &self.coupling.z, t, z, false));
                let b = dot(&self.coupling.f1, &kappa(self.k(), &self.coupling.z, t, z, true));
                Ok(LogGrad { dz: b / a, dy: 0.0 })
            }
            Field::H0 => {
                let (h, hz) = h0_grad(self.k(), self.z0, t, z, y)?;
                let (h2, hy) = h0_grad(self.k(), self.z0, t, y, z)?;
                debug_assert!((h - h2).abs() <= 1e-8 * h.abs().max(1.0));
                Ok(LogGrad { dz: hz / h, dy: hy / h2 })
            }
        }
    }

    /// Exact log-gradient, checked against [`Self::grad_log_fd`]; fails when the two
    /// disagree by more than `rel_tol` relative to `max(|exact|, 1)`.
    pub fn grad_log_checked(&self, field: Field, t: f64, z: f64, y: f64, rel_tol: f64) -> Result<LogGrad> {
        let a = self.grad_log_exact(field, t, z, y)?;
        if !self.kernel.exact_derivatives() {
            return Ok(a);
        }
        let b = self.grad_log_fd(field, t, z, y)?;
        let err = ((a.dz - b.dz).abs() / a.dz.abs().max(1.0)).max((a.dy - b.dy).abs() / a.dy.abs().max(1.0));
        if err > rel_tol {
            return Err(Error::ValidationFailed { what: "log-gradient cross-check", error: err, threshold: rel_tol });
        }
        Ok(a)
    }

    /// Central differences of `log field` with step `1e-4` of the grid span, shortened
    /// near a killing boundary.
    pub fn grad_log_fd(&self, field: Field, t: f64, z: f64, y: f64) -> Result<LogGrad> {
        let dom = self.kernel.domain();
        let base = 1e-4 * (dom.z_upper - dom.lower());
        let step = |x: f64| if dom.is_killed() { base.min(0.5 * (x - dom.ell)) } else { base };
        let value = |z: f64, y: f64| -> Result<f64> {
            match field {
                Field::H => self.h(t, z, y),
                Field::Rho { z1, norm } => self.rho(t, y, z1, norm),
                Field::Pi1 => self.pi1_collapsed(t, y),
                Field::Pi2 => self.pi2_collapsed(t, z),
                Field::H0 => h0_eval(self.k(), self.z0, t, z, y),
            }
        };
        let d = |plus: Result<f64>, minus: Result<f64>, h: f64| -> Result<f64> {
            let (p, m) = (plus?, minus?);
            Ok((p.ln() - m.ln()) / (2.0 * h))
        };
        let uses_z = matches!(field, Field::H | Field::Pi2 | Field::H0);
        let uses_y = !matches!(field, Field::Pi2);
        let (hz, hy) = (step(z), step(y));
        let dz = if uses_z { d(value(z + hz, y), value(z - hz, y), hz)? } else { 0.0 };
        let dy = if uses_y { d(value(z, y + hy), value(z, y - hy), hy)? } else { 0.0 };
        Ok(LogGrad { dz, dy })
    }
}
