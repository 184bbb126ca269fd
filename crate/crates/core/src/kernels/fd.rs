//! Crank–Nicolson finite-difference transition kernel for a time-homogeneous
//! diffusion `dZ = b(Z) dt + sigma(Z) dW` with absorbing ends.
//!
//! The tridiagonal generator is symmetrised by a diagonal similarity and
//! diagonalised once, so `P^n = D^-1 U diag(r^n) U^T D` is available for every
//! lag. Off-node values use piecewise-cubic Hermite interpolation in both
//! arguments and linear interpolation between neighbouring lags.

use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, SymmetricEigen};

use super::{Domain, TransitionKernel};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdSpec {
    /// Number of grid intervals between the lower edge and `z_upper`.
    pub space_steps: usize,
    /// Number of time steps per unit time.
    pub time_steps: usize,
}

type Coef = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Step powers keyed by step count.
type Cache = Mutex<Vec<(usize, Arc<Vec<f64>>)>>;

pub struct FdKernel {
    domain: Domain,
    spec: FdSpec,
    lo: f64,
    h: f64,
    m: usize,
    dt: f64,
    absorbing_low_is_default: bool,
    drift: Coef,
    sigma: Coef,
    /// Row-major `U[a, k]`, orthonormal eigenvectors of the symmetrised generator.
    ut: Vec<f64>,
    r: Vec<f64>,
    /// Implicit-Euler half-step factors used to start the recursion.
    r_start: Vec<f64>,
    log_d: Vec<f64>,
    low: Harmonic,
    high: Harmonic,
    cache: Cache,
    default_cache: Cache,
}

/// Steady state of the boundary-hitting problem and its spectral coefficients.
struct Harmonic {
    steady: Vec<f64>,
    coeff: Vec<f64>,
}

const CACHE_SLOTS: usize = 8;

impl std::fmt::Debug for FdKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FdKernel")
            .field("domain", &self.domain)
            .field("spec", &self.spec)
            .finish()
    }
}

impl FdKernel {
    pub fn new(
        domain: Domain,
        spec: FdSpec,
        drift: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sigma: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if spec.space_steps < 4 || spec.time_steps < 1 {
            return Err(Error::InvalidParameter {
                name: "space_steps/time_steps",
                reason: format!("grid too small: {spec:?}"),
            });
        }
        let lo = domain.lower();
        let hi = domain.z_upper;
        let h = (hi - lo) / spec.space_steps as f64;
        let m = spec.space_steps - 1;
        let dt = 1.0 / spec.time_steps as f64;
        let x = |i: usize| lo + i as f64 * h;

        // generator rows: a_i g_{i-1} + diag_i g_i + c_i g_{i+1}, interior i = 1..=m
        let mut a = vec![0.0; m];
        let mut c = vec![0.0; m];
        let mut diag = vec![0.0; m];
        for i in 0..m {
            let z = x(i + 1);
            let s2 = sigma(z).powi(2);
            let b = drift(z);
            if !(s2 > 0.0) || !b.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "sigma",
                    reason: format!("non-positive or non-finite coefficient at z = {z}"),
                });
            }
            let peclet = b.abs() * h / s2;
            if peclet >= 1.0 {
                return Err(Error::UnstableGrid { peclet, z });
            }
            a[i] = s2 / (2.0 * h * h) - b / (2.0 * h);
            c[i] = s2 / (2.0 * h * h) + b / (2.0 * h);
            diag[i] = -s2 / (h * h);
        }

        // D_{i+1} / D_i = sqrt(c_i / a_{i+1}) makes D A D^-1 symmetric.
        let mut log_d = vec![0.0; m];
        for i in 1..m {
            log_d[i] = log_d[i - 1] + 0.5 * (c[i - 1] / a[i]).ln();
        }
        let shift = log_d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        log_d.iter_mut().for_each(|v| *v -= shift);

        let mut sym = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            sym[(i, i)] = diag[i];
            if i + 1 < m {
                let off = (c[i] * a[i + 1]).sqrt();
                sym[(i, i + 1)] = off;
                sym[(i + 1, i)] = off;
            }
        }
        let eig = SymmetricEigen::new(sym);
        let r: Vec<f64> = eig
            .eigenvalues
            .iter()
            .map(|&lam| (1.0 + 0.5 * dt * lam) / (1.0 - 0.5 * dt * lam))
            .collect();
        let r_start: Vec<f64> = eig.eigenvalues.iter().map(|&lam| 1.0 / (1.0 - 0.5 * dt * lam)).collect();
        let u = eig.eigenvectors;
        let mut ut = vec![0.0; m * m];
        for i in 0..m {
            for k in 0..m {
                ut[i * m + k] = u[(i, k)];
            }
        }

        let d: Vec<f64> = log_d.iter().map(|v| v.exp()).collect();
        let harmonic = |beta_low: f64, beta_high: f64| {
            let mut rhs = vec![0.0; m];
            rhs[0] -= beta_low;
            rhs[m - 1] -= beta_high;
            let steady = solve_tridiagonal(&a, &diag, &c, &rhs);
            let mut coeff = vec![0.0; m];
            for k in 0..m {
                coeff[k] = (0..m).map(|i| ut[i * m + k] * d[i] * steady[i]).sum();
            }
            Harmonic { steady, coeff }
        };
        let low = harmonic(a[0], 0.0);
        let high = harmonic(0.0, c[m - 1]);

        Ok(Self {
            absorbing_low_is_default: domain.is_killed() && domain.ell > -domain.z_upper,
            domain,
            spec,
            lo,
            h,
            m,
            dt,
            drift: Arc::new(drift),
            sigma: Arc::new(sigma),
            ut,
            r,
            r_start,
            log_d,
            low,
            high,
            cache: Mutex::new(Vec::new()),
            default_cache: Mutex::new(Vec::new()),
        })
    }

    /// Constant-coefficient convenience constructor.
    pub fn constant(domain: Domain, spec: FdSpec, drift: f64, sigma: f64) -> Result<Self> {
        Self::new(domain, spec, move |_| drift, move |_| sigma)
    }

    pub fn spec(&self) -> FdSpec {
        self.spec
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Full-grid nodes `lo, lo + h, ..., z_upper`.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.m + 2).map(|i| self.lo + i as f64 * self.h).collect()
    }

    /// Mass that leaves through the truncation edges (both edges when the lower
    /// one is not a killing boundary) by lag `t - s`, for start point `z`.
    pub fn far_field_leak(&self, s: f64, t: f64, z: f64) -> f64 {
        let leak_low = !self.absorbing_low_is_default;
        self.interp_lags(t - s, |n| {
            let mut v = self.hitting_vec(&self.high, n, 0.0);
            if leak_low {
                let w = self.hitting_vec(&self.low, n, 1.0);
                v.iter_mut().zip(&w).for_each(|(a, b)| *a += b);
            } else {
                *v.first_mut().unwrap() = 0.0;
            }
            *v.last_mut().unwrap() = 1.0;
            stencil_eval(&v, self.stencil(z), false)
        })
    }

    /// `(n_lo, w_lo, n_hi, w_hi)` for lag `tau`; lags below one step use one step.
    fn lag_weights(&self, tau: f64) -> [(usize, f64); 2] {
        let steps = (tau / self.dt).max(1.0);
        let n_lo = (steps + 1e-9).floor();
        let frac = steps - n_lo;
        let n_lo = n_lo as usize;
        if frac < 1e-9 {
            [(n_lo, 1.0), (n_lo, 0.0)]
        } else {
            [(n_lo, 1.0 - frac), (n_lo + 1, frac)]
        }
    }

    fn interp_lags(&self, tau: f64, f: impl Fn(usize) -> f64) -> f64 {
        let [(n0, w0), (n1, w1)] = self.lag_weights(tau);
        let mut v = w0 * f(n0);
        if w1 > 0.0 {
            v += w1 * f(n1);
        }
        v
    }

    /// Growth of mode `k` over `n` steps. The first step is replaced by two
    /// implicit-Euler half steps, which damps the stiff modes excited by
    /// non-smooth data.
    #[inline]
    fn amplification(&self, k: usize, n: usize) -> f64 {
        if n == 0 {
            return 1.0;
        }
        self.r_start[k].powi(2) * self.r[k].powi(n as i32 - 1)
    }

    /// Symmetric matrix `U diag(r^n) U^T`, cached by lag.
    fn power_matrix(&self, n: usize) -> Arc<Vec<f64>> {
        cached(&self.cache, n, CACHE_SLOTS, || {
            let m = self.m;
            let u = DMatrix::from_row_slice(m, m, &self.ut);
            let mut scaled = u.clone();
            for (k, mut col) in scaled.column_iter_mut().enumerate() {
                col *= self.amplification(k, n);
            }
            // symmetric, so column-major storage is also row-major
            (scaled * u.transpose()).as_slice().to_vec()
        })
    }

    /// `P^n v` restricted to the interior for a harmonic steady state, returned
    /// on the full grid as `steady - P^n steady` with the given low-edge value.
    fn hitting_vec(&self, hm: &Harmonic, n: usize, low_value: f64) -> Vec<f64> {
        let m = self.m;
        let pw: Vec<f64> = hm.coeff.iter().enumerate().map(|(k, c)| self.amplification(k, n) * c).collect();
        let mut out = vec![0.0; m + 2];
        out[0] = low_value;
        for i in 0..m {
            let row = &self.ut[i * m..(i + 1) * m];
            let s: f64 = row.iter().zip(&pw).map(|(u, p)| u * p).sum();
            out[i + 1] = hm.steady[i] - s / self.log_d[i].exp();
        }
        out
    }

    fn default_vec(&self, n: usize) -> Arc<Vec<f64>> {
        cached(&self.default_cache, n, 4 * CACHE_SLOTS, || {
            if self.absorbing_low_is_default {
                self.hitting_vec(&self.low, n, 1.0)
            } else {
                vec![0.0; self.m + 2]
            }
        })
    }

    /// `q(x_a, x_b)` for full-grid indices, zero on the edges.
    #[inline]
    fn entry(&self, mat: &[f64], a: usize, b: usize) -> f64 {
        if a == 0 || b == 0 || a > self.m || b > self.m {
            return 0.0;
        }
        let (i, j) = (a - 1, b - 1);
        mat[i * self.m + j] * (self.log_d[j] - self.log_d[i]).exp() / self.h
    }

    /// Hermite stencil for `x`: full-grid indices with value and derivative weights.
    fn stencil(&self, x: f64) -> Stencil {
        let g = self.m + 1;
        let pos = ((x - self.lo) / self.h).clamp(0.0, g as f64);
        let j = (pos.floor() as usize).min(g - 1);
        let u = pos - j as f64;
        let (h00, h10, h01, h11) = (
            2.0 * u * u * u - 3.0 * u * u + 1.0,
            u * u * u - 2.0 * u * u + u,
            -2.0 * u * u * u + 3.0 * u * u,
            u * u * u - u * u,
        );
        let (d00, d10, d01, d11) = (
            (6.0 * u * u - 6.0 * u) / self.h,
            (3.0 * u * u - 4.0 * u + 1.0) / self.h,
            (-6.0 * u * u + 6.0 * u) / self.h,
            (3.0 * u * u - 2.0 * u) / self.h,
        );
        let mut st = Stencil::default();
        st.add(j, h00, d00);
        st.add(j + 1, h01, d01);
        for (k, hv, dv) in [(j, h10, d10), (j + 1, h11, d11)] {
            // h * slope at node k as a combination of node values
            if k == 0 {
                st.add(0, -1.5 * hv, -1.5 * dv);
                st.add(1, 2.0 * hv, 2.0 * dv);
                st.add(2, -0.5 * hv, -0.5 * dv);
            } else if k == g {
                st.add(g, 1.5 * hv, 1.5 * dv);
                st.add(g - 1, -2.0 * hv, -2.0 * dv);
                st.add(g - 2, 0.5 * hv, 0.5 * dv);
            } else {
                st.add(k + 1, 0.5 * hv, 0.5 * dv);
                st.add(k - 1, -0.5 * hv, -0.5 * dv);
            }
        }
        st
    }

    fn inside(&self, x: f64) -> bool {
        x > self.lo && x < self.domain.z_upper && self.domain.contains(x)
    }

    fn point_value(&self, s: f64, t: f64, z: f64, y: f64, dz: bool) -> f64 {
        if t <= s || !self.inside(z) || !self.inside(y) {
            return 0.0;
        }
        let sz = self.stencil(z);
        let sy = self.stencil(y);
        self.interp_lags(t - s, |n| {
            let mat = self.power_matrix(n);
            let mut acc = 0.0;
            for &(a, wa, da) in sz.iter() {
                let w = if dz { da } else { wa };
                if w == 0.0 {
                    continue;
                }
                let inner: f64 = sy.iter().map(|&(b, wb, _)| wb * self.entry(&mat, a, b)).sum();
                acc += w * inner;
            }
            acc
        })
    }

    fn row_values(&self, s: f64, t: f64, z: f64, ys: &[f64], dz: bool) -> Vec<f64> {
        if t <= s || !self.inside(z) {
            return vec![0.0; ys.len()];
        }
        let sz = self.stencil(z);
        let g = self.m + 1;
        let mut full = vec![0.0; g + 1];
        for (n, wt) in self.lag_weights(t - s) {
            if wt == 0.0 {
                continue;
            }
            let mat = self.power_matrix(n);
            for &(a, wa, da) in sz.iter() {
                let w = wt * if dz { da } else { wa };
                if w == 0.0 {
                    continue;
                }
                for (b, f) in full.iter_mut().enumerate() {
                    *f += w * self.entry(&mat, a, b);
                }
            }
        }
        ys.iter()
            .map(|&y| if self.inside(y) { stencil_eval(&full, self.stencil(y), false) } else { 0.0 })
            .collect()
    }
}

/// Small LRU keyed by lag.
fn cached(slot: &Cache, n: usize, cap: usize, make: impl FnOnce() -> Vec<f64>) -> Arc<Vec<f64>> {
    {
        let mut cache = slot.lock().unwrap();
        if let Some(pos) = cache.iter().position(|(k, _)| *k == n) {
            let entry = cache.remove(pos);
            let out = entry.1.clone();
            cache.push(entry);
            return out;
        }
    }
    let value = Arc::new(make());
    let mut cache = slot.lock().unwrap();
    if cache.len() >= cap {
        cache.remove(0);
    }
    cache.push((n, value.clone()));
    value
}

#[derive(Default)]
struct Stencil {
    len: usize,
    items: [(usize, f64, f64); 8],
}

impl Stencil {
    fn add(&mut self, idx: usize, w: f64, dw: f64) {
        for it in self.items[..self.len].iter_mut() {
            if it.0 == idx {
                it.1 += w;
                it.2 += dw;
                return;
            }
        }
        self.items[self.len] = (idx, w, dw);
        self.len += 1;
    }

    fn iter(&self) -> impl Iterator<Item = &(usize, f64, f64)> {
        self.items[..self.len].iter()
    }
}

fn stencil_eval(v: &[f64], st: Stencil, derivative: bool) -> f64 {
    st.iter().map(|&(i, w, d)| v[i] * if derivative { d } else { w }).sum()
}

/// Thomas algorithm for `a_i x_{i-1} + b_i x_i + c_i x_{i+1} = r_i`.
fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], r: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut rp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    rp[0] = r[0] / b[0];
    for i in 1..n {
        let den = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / den;
        rp[i] = (r[i] - a[i] * rp[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = rp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = rp[i] - cp[i] * x[i + 1];
    }
    x
}

impl TransitionKernel for FdKernel {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn density(&self, s: f64, t: f64, z: f64, y: f64) -> f64 {
        self.point_value(s, t, z, y, false)
    }

    fn density_dz(&self, s: f64, t: f64, z: f64, y: f64) -> f64 {
        self.point_value(s, t, z, y, true)
    }

    fn default_prob(&self, s: f64, t: f64, z: f64) -> f64 {
        if !self.domain.contains(z) {
            return 1.0;
        }
        if t <= s || z >= self.domain.z_upper {
            return 0.0;
        }
        self.interp_lags(t - s, |n| stencil_eval(&self.default_vec(n), self.stencil(z), false))
    }

    fn default_prob_dz(&self, s: f64, t: f64, z: f64) -> f64 {
        if t <= s || !self.inside(z) {
            return 0.0;
        }
        self.interp_lags(t - s, |n| stencil_eval(&self.default_vec(n), self.stencil(z), true))
    }

    fn drift(&self, _t: f64, z: f64) -> f64 {
        (self.drift)(z)
    }

    fn sigma(&self, _t: f64, z: f64) -> f64 {
        (self.sigma)(z)
    }

    fn support(&self) -> (f64, f64) {
        (self.lo, self.domain.z_upper)
    }

    fn exact_derivatives(&self) -> bool {
        false
    }

    fn name(&self) -> &str {
        "fd"
    }

    fn time_step(&self) -> Option<f64> {
        Some(self.dt)
    }

    fn density_row(&self, s: f64, t: f64, z: f64, ys: &[f64]) -> Vec<f64> {
        self.row_values(s, t, z, ys, false)
    }

    fn density_dz_row(&self, s: f64, t: f64, z: f64, ys: &[f64]) -> Vec<f64> {
        self.row_values(s, t, z, ys, true)
    }

    fn density_col(&self, s: f64, t: f64, zs: &[f64], y: f64) -> Vec<f64> {
        if t <= s || !self.inside(y) {
            return vec![0.0; zs.len()];
        }
        let sy = self.stencil(y);
        let g = self.m + 1;
        let mut full = vec![0.0; g + 1];
        for (n, wt) in self.lag_weights(t - s) {
            if wt == 0.0 {
                continue;
            }
            let mat = self.power_matrix(n);
            for &(b, wb, _) in sy.iter() {
                for (a, f) in full.iter_mut().enumerate() {
                    *f += wt * wb * self.entry(&mat, a, b);
                }
            }
        }
        zs.iter()
            .map(|&z| if self.inside(z) { stencil_eval(&full, self.stencil(z), false) } else { 0.0 })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{BrownianKernel, KilledBrownianKernel};

    #[test]
    fn tridiagonal_solver() {
        let a = [0.0, 1.0, 1.0];
        let b = [4.0, 4.0, 4.0];
        let c = [1.0, 1.0, 0.0];
        let x = solve_tridiagonal(&a, &b, &c, &[5.0, 6.0, 5.0]);
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn stencil_reproduces_cubics_in_the_interior() {
        let k = FdKernel::constant(Domain::free(4.0).unwrap(), FdSpec { space_steps: 40, time_steps: 10 }, 0.0, 1.0).unwrap();
        let nodes = k.nodes();
        let v: Vec<f64> = nodes.iter().map(|x| x * x - 0.5 * x).collect();
        for &x in &[-1.03, 0.0, 0.377, 2.5] {
            let st = k.stencil(x);
            assert!((stencil_eval(&v, k.stencil(x), false) - (x * x - 0.5 * x)).abs() < 1e-12);
            assert!((stencil_eval(&v, st, true) - (2.0 * x - 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn coarse_grid_is_close_to_brownian() {
        let fd = FdKernel::constant(Domain::free(8.0).unwrap(), FdSpec { space_steps: 320, time_steps: 400 }, 0.0, 1.0).unwrap();
        let bm = BrownianKernel::new(8.0).unwrap();
        for &(z, y) in &[(0.0, 0.0), (0.3, -1.1), (1.0, 2.0)] {
            let e = (fd.density(0.0, 1.0, z, y) - bm.density(0.0, 1.0, z, y)).abs();
            assert!(e < 2e-4, "{z} {y} {e}");
        }
        let row = fd.density_row(0.5, 1.0, 0.3, &[-1.0, 0.0, 0.7]);
        for (v, y) in row.iter().zip([-1.0, 0.0, 0.7]) {
            assert!((v - fd.density(0.5, 1.0, 0.3, y)).abs() < 1e-12);
        }
        let col = fd.density_col(0.5, 1.0, &[-1.0, 0.0, 0.7], 0.3);
        for (v, z) in col.iter().zip([-1.0, 0.0, 0.7]) {
            assert!((v - fd.density(0.5, 1.0, z, 0.3)).abs() < 1e-12);
        }
    }

    #[test]
    fn killed_default_probability() {
        let fd = FdKernel::constant(Domain::killed(0.0, 8.0).unwrap(), FdSpec { space_steps: 320, time_steps: 400 }, 0.0, 1.0).unwrap();
        let an = KilledBrownianKernel::new(0.0, 8.0).unwrap();
        for z in [0.05, 0.5, 1.0, 2.5] {
            assert!((fd.default_prob(0.0, 1.0, z) - an.default_prob(0.0, 1.0, z)).abs() < 1e-4);
            assert!((fd.default_prob_dz(0.0, 1.0, z) - an.default_prob_dz(0.0, 1.0, z)).abs() < 5e-3);
        }
        assert_eq!(fd.default_prob(0.0, 1.0, 0.0), 1.0);
        assert!(fd.far_field_leak(0.0, 1.0, 1.0) < 1e-10);
    }

    #[test]
    fn rejects_unresolved_drift() {
        let r = FdKernel::constant(Domain::free(8.0).unwrap(), FdSpec { space_steps: 16, time_steps: 10 }, 5.0, 1.0);
        assert!(matches!(r, Err(Error::UnstableGrid { .. })));
    }
}
