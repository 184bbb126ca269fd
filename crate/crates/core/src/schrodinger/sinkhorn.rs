//! Entropic transport between two discrete marginals.
//!
//! Iterations run on scalings `u, v` against a kernel that periodically absorbs
//! them into the log-potentials, so no exponential is taken inside the loop and
//! nothing under- or overflows at small `eps`. The returned potentials come from
//! one exact log-domain sweep on top of the scaled iterate.

use std::sync::Arc;

use ndarray::{Array1, Array2, Zip};

use super::cost::CostSpec;
use super::coupling::{Coupling, Marginal};
use crate::error::{Error, Result};
use crate::quadrature::DiscreteMeasure;
use crate::special::log_sum_exp;

#[derive(Clone, Debug)]
pub struct SinkhornOptions {
    pub eps: f64,
    /// Stop once both the marginal mass residual and the sup-norm potential
    /// change of one sweep are below `tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial `(phi, psi)`, e.g. from a neighbouring `eps`.
    pub warm_start: Option<(Vec<f64>, Vec<f64>)>,
    /// Absorb scalings once `|log u|` or `|log v|` exceeds this.
    pub absorb_at: f64,
}

impl SinkhornOptions {
    pub fn new(eps: f64) -> Self {
        Self { eps, tol: 1e-10, max_iter: 100_000, warm_start: None, absorb_at: 30.0 }
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn max_iter(mut self, n: usize) -> Self {
        self.max_iter = n;
        self
    }

    pub fn warm_start(mut self, phi: Vec<f64>, psi: Vec<f64>) -> Self {
        self.warm_start = Some((phi, psi));
        self
    }
}

/// Potentials and plan of an entropic transport problem. The plan is
/// `exp((phi(z) + psi(y) - c(z, y)) / eps) mu(dz) nu(dy)`, with the gauge fixed by
/// `sum phi mu = 0`.
#[derive(Clone, Debug)]
pub struct SchrodingerSolution {
    pub eps: f64,
    pub cost: CostSpec,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub coupling: Arc<Coupling>,
    pub iterations: usize,
    /// Largest marginal mass defect of the returned plan.
    pub residual: f64,
    /// Sup-norm potential change of the final sweep.
    pub potential_change: f64,
}

impl SchrodingerSolution {
    /// Kyle potentials `(phi_F, zeta)` on the two supports.
    pub fn kyle_potentials(&self) -> (Vec<f64>, Vec<f64>) {
        let z = &self.coupling.z.points;
        let y = &self.coupling.y.points;
        let phi_f = z.iter().zip(&self.phi).map(|(&zz, p)| p - self.cost.kyle_offsets(zz, 0.0).0).collect();
        let zeta = y.iter().zip(&self.psi).map(|(&yy, p)| p - self.cost.kyle_offsets(0.0, yy).1).collect();
        (phi_f, zeta)
    }

    /// Columns `node, phi, zeta`: Kyle potentials on the shared support.
    pub fn write_potentials_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        let (phi, zeta) = self.kyle_potentials();
        writeln!(w, "node,phi,zeta")?;
        for ((x, p), z) in self.coupling.z.points.iter().zip(&phi).zip(&zeta) {
            writeln!(w, "{x:.16e},{p:.16e},{z:.16e}")?;
        }
        Ok(())
    }

    /// Columns `z, y, f` over the product of the supports.
    pub fn write_coupling_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "z,y,f")?;
        let c = &self.coupling;
        for (a, z) in c.z.points.iter().enumerate() {
            for (b, y) in c.y.points.iter().enumerate() {
                writeln!(w, "{z:.16e},{y:.16e},{:.16e}", c.f[[a, b]])?;
            }
        }
        Ok(())
    }

    /// `phi` at an arbitrary point by the c-transform of `psi`.
    pub fn phi_at(&self, z: f64) -> f64 {
        let y = &self.coupling.y;
        -self.eps
            * log_sum_exp(
                y.points
                    .iter()
                    .zip(&self.psi)
                    .zip(&y.mass)
                    .map(|((&yy, p), m)| (p - self.cost.eval(z, yy)) / self.eps + m.ln()),
            )
    }

    /// `psi` at an arbitrary point by the c-transform of `phi`.
    pub fn psi_at(&self, y: f64) -> f64 {
        let z = &self.coupling.z;
        -self.eps
            * log_sum_exp(
                z.points
                    .iter()
                    .zip(&self.phi)
                    .zip(&z.mass)
                    .map(|((&zz, p), m)| (p - self.cost.eval(zz, y)) / self.eps + m.ln()),
            )
    }
}

fn lse_row(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    log_sum_exp(vals)
}

/// Solves the Schrödinger system between `mu` (signal side) and `nu` (order-flow
/// side). Both measures are rescaled to unit mass first.
pub fn sinkhorn_solve(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostSpec,
    opts: &SinkhornOptions,
) -> Result<SchrodingerSolution> {
    let eps = opts.eps;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter { name: "eps", reason: format!("must be positive, got {eps}") });
    }
    let mut zm = Marginal::from_measure(&mu.normalized()?);
    let mut ym = Marginal::from_measure(&nu.normalized()?);
    // exact zero masses would only produce -inf logs; they carry no constraint
    for m in zm.mass.iter_mut().chain(ym.mass.iter_mut()) {
        if *m < f64::MIN_POSITIVE {
            *m = 0.0;
        }
    }
    let (nz, ny) = (zm.len(), ym.len());
    let c = Array2::from_shape_fn((nz, ny), |(a, b)| cost.eval(zm.points[a], ym.points[b]));
    let a = Array1::from(zm.mass.clone());
    let b = Array1::from(ym.mass.clone());
    let log_a: Vec<f64> = zm.mass.iter().map(|m| m.ln()).collect();
    let log_b: Vec<f64> = ym.mass.iter().map(|m| m.ln()).collect();

    // only psi of a warm start matters: the first half-sweep recomputes phi
    let mut psi = match &opts.warm_start {
        Some((p, q)) if p.len() == nz && q.len() == ny => Array1::from(q.clone()),
        Some(_) => return Err(Error::Shape("warm start does not match the supports".into())),
        None => Array1::zeros(ny),
    };

    let phi_update = |psi: &Array1<f64>| -> Array1<f64> {
        Array1::from_shape_fn(nz, |i| {
            -eps * lse_row((0..ny).map(|j| (psi[j] - c[[i, j]]) / eps + log_b[j]))
        })
    };
    let psi_update = |phi: &Array1<f64>| -> Array1<f64> {
        Array1::from_shape_fn(ny, |j| {
            -eps * lse_row((0..nz).map(|i| (phi[i] - c[[i, j]]) / eps + log_a[i]))
        })
    };
    let build_kernel = |phi: &Array1<f64>, psi: &Array1<f64>| -> (Array2<f64>, Array2<f64>) {
        let mut k = Array2::zeros((nz, ny));
        Zip::indexed(&mut k).and(&c).par_for_each(|(i, j), kv, &cv| *kv = ((phi[i] + psi[j] - cv) / eps).exp());
        let kt = k.t().as_standard_layout().into_owned();
        (k, kt)
    };

    let mut phi = phi_update(&psi);
    psi = psi_update(&phi);
    let (mut k, mut kt) = build_kernel(&phi, &psi);
    let mut u = Array1::<f64>::ones(nz);
    let mut v = Array1::<f64>::ones(ny);

    let mut iterations = 0;
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    while iterations < opts.max_iter {
        iterations += 1;
        let kv = k.dot(&(&v * &b));
        let u_new = kv.mapv(|x| 1.0 / x);
        let ktu = kt.dot(&(&u_new * &a));
        let v_new = ktu.mapv(|x| 1.0 / x);

        let healthy = u_new.iter().chain(v_new.iter()).all(|x| x.is_finite() && *x > 0.0);
        if !healthy {
            phi.zip_mut_with(&u, |p, uu| *p += eps * uu.ln());
            psi.zip_mut_with(&v, |p, vv| *p += eps * vv.ln());
            phi = phi_update(&psi);
            psi = psi_update(&phi);
            (k, kt) = build_kernel(&phi, &psi);
            u.fill(1.0);
            v.fill(1.0);
            continue;
        }

        let dphi = u_new.iter().zip(&u).map(|(n, o)| (n / o).ln().abs()).fold(0.0, f64::max) * eps;
        let dpsi = v_new.iter().zip(&v).map(|(n, o)| (n / o).ln().abs()).fold(0.0, f64::max) * eps;
        // column sums before the psi update, relative to nu
        let mass_res = v.iter().zip(&ktu).zip(&b).map(|((vv, kk), bb)| bb * (vv * kk - 1.0).abs()).fold(0.0, f64::max);
        u = u_new;
        v = v_new;
        last_change = dphi.max(dpsi).max(mass_res);
        if last_change < opts.tol {
            converged = true;
            break;
        }
        let big = u.iter().chain(v.iter()).map(|x| x.ln().abs()).fold(0.0, f64::max);
        if big > opts.absorb_at {
            phi.zip_mut_with(&u, |p, uu| *p += eps * uu.ln());
            psi.zip_mut_with(&v, |p, vv| *p += eps * vv.ln());
            (k, kt) = build_kernel(&phi, &psi);
            u.fill(1.0);
            v.fill(1.0);
        }
    }

    phi.zip_mut_with(&u, |p, uu| *p += eps * uu.ln());
    psi.zip_mut_with(&v, |p, vv| *p += eps * vv.ln());
    let phi_exact = phi_update(&psi);
    let psi_exact = psi_update(&phi_exact);
    let potential_change = phi_exact
        .iter()
        .zip(&phi)
        .chain(psi_exact.iter().zip(&psi))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let mut phi = phi_exact;
    let mut psi = psi_exact;

    let gauge: f64 = phi.iter().zip(&a).map(|(p, m)| p * m).sum();
    phi.mapv_inplace(|p| p - gauge);
    psi.mapv_inplace(|p| p + gauge);

    let mut f = Array2::zeros((nz, ny));
    Zip::indexed(&mut f).and(&c).par_for_each(|(i, j), fv, &cv| *fv = ((phi[i] + psi[j] - cv) / eps).exp());
    let row_res = f.dot(&b).iter().zip(&a).map(|(s, m)| m * (s - 1.0).abs()).fold(0.0, f64::max);
    let col_res = f.t().dot(&a).iter().zip(&b).map(|(s, m)| m * (s - 1.0).abs()).fold(0.0, f64::max);
    let residual = row_res.max(col_res);

    if !converged {
        return Err(Error::NotConverged { iterations, residual: residual.max(last_change) });
    }

    zm.mass = a.to_vec();
    ym.mass = b.to_vec();
    let coupling = Coupling::from_potentials(zm, ym, f, psi.to_vec(), cost.clone(), eps);
    Ok(SchrodingerSolution {
        eps,
        cost: cost.clone(),
        phi: phi.to_vec(),
        psi: psi.to_vec(),
        coupling: Arc::new(coupling),
        iterations,
        residual,
        potential_change,
    })
}
