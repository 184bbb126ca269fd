//! Drift fields tabulated on a time lattice and a uniform spatial axis, for use
//! inside the path simulator. Lookups interpolate linearly in time and space and
//! clamp outside the tabulated window.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::kappa;
use crate::error::{Error, Result};
use crate::kernels::TransitionKernel;
use crate::schrodinger::{Coupling, Marginal};

#[derive(Clone, Debug, PartialEq)]
pub struct TimeLattice {
    pub times: Vec<f64>,
}

impl TimeLattice {
    /// `uniform` points on `[0, 0.9]` followed by `geometric` points whose distance
    /// to one shrinks geometrically from 0.1 down to `1 - t_end`.
    pub fn bridge(t_end: f64, uniform: usize, geometric: usize) -> Result<Self> {
        if !(t_end > 0.9 && t_end < 1.0) || uniform < 2 {
            return Err(Error::InvalidParameter {
                name: "time lattice",
                reason: format!("need 0.9 < t_end < 1 and at least two uniform points (t_end = {t_end})"),
            });
        }
        let split = 0.9;
        let mut times: Vec<f64> = (0..uniform).map(|k| split * k as f64 / (uniform - 1) as f64).collect();
        let ratio = (1.0 - t_end) / (1.0 - split);
        for m in 1..=geometric {
            times.push(1.0 - (1.0 - split) * ratio.powf(m as f64 / geometric as f64));
        }
        if geometric == 0 {
            times.push(t_end);
        }
        Ok(Self::from_times(times))
    }

    pub fn from_times(mut times: Vec<f64>) -> Self {
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        Self { times }
    }

    /// Moves every point onto the lattice `k dt` (for grid-based kernels).
    pub fn snapped(&self, dt: f64) -> Self {
        Self::from_times(self.times.iter().map(|t| (t / dt).round() * dt).collect())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    #[inline]
    fn locate(&self, t: f64) -> (usize, f64) {
        let ts = &self.times;
        if t <= ts[0] {
            return (0, 0.0);
        }
        let last = ts.len() - 1;
        if t >= ts[last] {
            return (last.saturating_sub(1), if last == 0 { 0.0 } else { 1.0 });
        }
        let k = ts.partition_point(|&s| s <= t) - 1;
        (k, (t - ts[k]) / (ts[k + 1] - ts[k]))
    }
}

/// Uniform spatial axis `lo, lo + h, ..., lo + (n-1) h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceAxis {
    pub lo: f64,
    pub h: f64,
    pub n: usize,
}

impl SpaceAxis {
    /// Axis over `[max(ell, -half_width), half_width]` with `n` nodes; a killing
    /// boundary inside the window is the first node.
    pub fn for_kernel(kernel: &dyn TransitionKernel, half_width: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter { name: "table nodes", reason: format!("need >= 3, got {n}") });
        }
        let dom = kernel.domain();
        let hi = half_width.min(dom.z_upper);
        let lo = if dom.is_killed() && dom.ell > -half_width { dom.ell } else { -hi };
        Ok(Self { lo, h: (hi - lo) / (n - 1) as f64, n })
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.lo + i as f64 * self.h).collect()
    }

    #[inline]
    fn locate(&self, x: f64) -> (usize, f64) {
        let pos = ((x - self.lo) / self.h).clamp(0.0, (self.n - 1) as f64);
        let i = (pos.floor() as usize).min(self.n - 2);
        (i, pos - i as f64)
    }
}

/// Accuracy of a table against direct evaluation at random off-node points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableDiagnostics {
    pub samples: usize,
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
}

fn scale_rows(m: &mut Array2<f64>, d: Option<&mut Array2<f64>>) {
    let scales: Vec<f64> = m
        .rows()
        .into_iter()
        .map(|r| {
            let mx = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if mx > 0.0 && mx.is_finite() { 1.0 / mx } else { 1.0 }
        })
        .collect();
    for (mut r, s) in m.rows_mut().into_iter().zip(&scales) {
        r.mapv_inplace(|v| v * s);
    }
    if let Some(d) = d {
        for (mut r, s) in d.rows_mut().into_iter().zip(&scales) {
            r.mapv_inplace(|v| v * s);
        }
    }
}

/// `kappa` rows for every axis node: values and derivatives, rows scaled by a
/// common positive factor (irrelevant for log-gradients).
fn kappa_matrix(kernel: &dyn TransitionKernel, m: &Marginal, t: f64, nodes: &[f64]) -> (Array2<f64>, Array2<f64>) {
    let n = m.len();
    let mut a = Array2::zeros((nodes.len(), n));
    let mut d = Array2::zeros((nodes.len(), n));
    for (i, &x) in nodes.iter().enumerate() {
        a.row_mut(i).assign(&ndarray::ArrayView1::from(&kappa(kernel, m, t, x, false)));
        d.row_mut(i).assign(&ndarray::ArrayView1::from(&kappa(kernel, m, t, x, true)));
    }
    scale_rows(&mut a, Some(&mut d));
    (a, d)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

/// Two-dimensional drift `sigma^2 grad log h` on `times x axis x axis`.
#[derive(Clone, Debug)]
pub struct DriftTable {
    pub times: TimeLattice,
    pub axis: SpaceAxis,
    dz: Vec<f64>,
    dy: Vec<f64>,
}

/// How the two `kappa` vectors are paired.
enum Mixing<'a> {
    Full(&'a Array2<f64>),
    Diagonal(Vec<f64>),
}

impl DriftTable {
    /// Table for `h(t,(z,y)) = sum_ab f_ab kappa_a(t,z) kappa_b(t,y)`.
    pub fn from_coupling(kernel: &dyn TransitionKernel, coupling: &Coupling, times: TimeLattice, axis: SpaceAxis) -> Result<Self> {
        Self::build(kernel, &coupling.z, &coupling.y, Mixing::Full(&coupling.f), times, axis)
    }

    /// Table for the diagonal limit `h0`, discretised on the support of `eta`.
    pub fn limit(kernel: &dyn TransitionKernel, eta: &Marginal, times: TimeLattice, axis: SpaceAxis) -> Result<Self> {
        let inv: Vec<f64> = eta.mass.iter().map(|&m| if m > 0.0 { 1.0 / m } else { 0.0 }).collect();
        Self::build(kernel, eta, eta, Mixing::Diagonal(inv), times, axis)
    }

    fn build(
        kernel: &dyn TransitionKernel,
        zm: &Marginal,
        ym: &Marginal,
        mix: Mixing<'_>,
        times: TimeLattice,
        axis: SpaceAxis,
    ) -> Result<Self> {
        if times.times.iter().any(|t| !(0.0..1.0).contains(t)) {
            return Err(Error::InvalidParameter { name: "time lattice", reason: "times must lie in [0, 1)".into() });
        }
        let nodes = axis.nodes();
        let n = axis.n;
        let slices: Vec<(Vec<f64>, Vec<f64>)> = times
            .times
            .par_iter()
            .map(|&t| {
                let (a, ad) = kappa_matrix(kernel, zm, t, &nodes);
                let (b, bd) = kappa_matrix(kernel, ym, t, &nodes);
                let (g, gd) = match &mix {
                    Mixing::Full(f) => (f.dot(&b.t()), f.dot(&bd.t())),
                    Mixing::Diagonal(w) => {
                        let mut g = b.t().to_owned();
                        let mut gd = bd.t().to_owned();
                        for (mut r, &s) in g.axis_iter_mut(Axis(0)).zip(w) {
                            r.mapv_inplace(|v| v * s);
                        }
                        for (mut r, &s) in gd.axis_iter_mut(Axis(0)).zip(w) {
                            r.mapv_inplace(|v| v * s);
                        }
                        (g, gd)
                    }
                };
                let h = a.dot(&g);
                let hz = ad.dot(&g);
                let hy = a.dot(&gd);
                let mut dz = vec![0.0; n * n];
                let mut dy = vec![0.0; n * n];
                for i in 0..n {
                    let sz = kernel.sigma(t, nodes[i]).powi(2);
                    for j in 0..n {
                        let sy = kernel.sigma(t, nodes[j]).powi(2);
                        dz[i * n + j] = sz * ratio(hz[[i, j]], h[[i, j]]);
                        dy[i * n + j] = sy * ratio(hy[[i, j]], h[[i, j]]);
                    }
                }
                (dz, dy)
            })
            .collect();
        let (mut dz, mut dy) = (Vec::with_capacity(times.len() * n * n), Vec::with_capacity(times.len() * n * n));
        for (a, b) in slices {
            dz.extend(a);
            dy.extend(b);
        }
        Ok(Self { times, axis, dz, dy })
    }

    /// `(drift_z, drift_y)` at `(t, z, y)`.
    #[inline]
    pub fn eval(&self, t: f64, z: f64, y: f64) -> (f64, f64) {
        let (k, wt) = self.times.locate(t);
        let (i, wi) = self.axis.locate(z);
        let (j, wj) = self.axis.locate(y);
        let n = self.axis.n;
        let bil = |v: &[f64], k: usize| {
            let base = k * n * n;
            let p = |a: usize, b: usize| v[base + a * n + b];
            (1.0 - wi) * ((1.0 - wj) * p(i, j) + wj * p(i, j + 1)) + wi * ((1.0 - wj) * p(i + 1, j) + wj * p(i + 1, j + 1))
        };
        let k1 = (k + 1).min(self.times.len() - 1);
        let lerp = |v: &[f64]| {
            let a = bil(v, k);
            if wt == 0.0 { a } else { (1.0 - wt) * a + wt * bil(v, k1) }
        };
        (lerp(&self.dz), lerp(&self.dy))
    }

    /// Columns `t, z, y, drift_z, drift_y` on the table nodes.
    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "t,z,y,drift_z,drift_y")?;
        let nodes = self.axis.nodes();
        let n = self.axis.n;
        for (k, t) in self.times.times.iter().enumerate() {
            for (i, z) in nodes.iter().enumerate() {
                for (j, y) in nodes.iter().enumerate() {
                    let at = k * n * n + i * n + j;
                    writeln!(w, "{t:.16e},{z:.16e},{y:.16e},{:.16e},{:.16e}", self.dz[at], self.dy[at])?;
                }
            }
        }
        Ok(())
    }

    /// Compares the table with `exact` at `samples` random points of the window.
    pub fn diagnostics(&self, samples: usize, seed: u64, exact: impl Fn(f64, f64, f64) -> Result<(f64, f64)>) -> Result<TableDiagnostics> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (t0, t1) = (self.times.times[0], *self.times.times.last().unwrap());
        let hi = self.axis.lo + (self.axis.n - 1) as f64 * self.axis.h;
        let (mut worst, mut sum, mut used) = (0.0f64, 0.0, 0);
        for _ in 0..samples {
            let t = rng.random_range(t0..t1);
            let z = rng.random_range(self.axis.lo..hi);
            let y = rng.random_range(self.axis.lo..hi);
            let (ez, ey) = exact(t, z, y)?;
            let (tz, ty) = self.eval(t, z, y);
            let e = (ez - tz).abs().max((ey - ty).abs());
            if e.is_finite() {
                worst = worst.max(e);
                sum += e;
                used += 1;
            }
        }
        Ok(TableDiagnostics { samples: used, max_abs_error: worst, mean_abs_error: sum / used.max(1) as f64 })
    }
}

/// Order-flow drift `sigma^2 d/dy log rho(t, y; z1)` for every support point `z1`
/// of the coupling's first marginal.
#[derive(Clone, Debug)]
pub struct RhoTable {
    pub times: TimeLattice,
    pub axis: SpaceAxis,
    targets: usize,
    dy: Vec<f64>,
}

impl RhoTable {
    pub fn build(kernel: &dyn TransitionKernel, coupling: &Coupling, times: TimeLattice, axis: SpaceAxis) -> Result<Self> {
        if times.times.iter().any(|t| !(0.0..1.0).contains(t)) {
            return Err(Error::InvalidParameter { name: "time lattice", reason: "times must lie in [0, 1)".into() });
        }
        let nodes = axis.nodes();
        let n = axis.n;
        let targets = coupling.z.len();
        let slices: Vec<Vec<f64>> = times
            .times
            .par_iter()
            .map(|&t| {
                let (b, bd) = kappa_matrix(kernel, &coupling.y, t, &nodes);
                let g = coupling.f.dot(&b.t());
                let gd = coupling.f.dot(&bd.t());
                let mut out = vec![0.0; targets * n];
                for a in 0..targets {
                    for j in 0..n {
                        out[a * n + j] = kernel.sigma(t, nodes[j]).powi(2) * ratio(gd[[a, j]], g[[a, j]]);
                    }
                }
                out
            })
            .collect();
        Ok(Self { times, axis, targets, dy: slices.concat() })
    }

    pub fn targets(&self) -> usize {
        self.targets
    }

    /// Drift at `(t, y)` for the terminal signal with support index `a`.
    #[inline]
    pub fn eval(&self, t: f64, a: usize, y: f64) -> f64 {
        lerp_target(&self.times, &self.axis, self.targets, &self.dy, t, a, y)
    }
}

#[inline]
fn lerp_target(times: &TimeLattice, axis: &SpaceAxis, targets: usize, v: &[f64], t: f64, a: usize, x: f64) -> f64 {
    let (k, wt) = times.locate(t);
    let (j, wj) = axis.locate(x);
    let n = axis.n;
    let at = |k: usize| {
        let base = (k * targets + a) * n;
        (1.0 - wj) * v[base + j] + wj * v[base + j + 1]
    };
    let a0 = at(k);
    if wt == 0.0 {
        a0
    } else {
        (1.0 - wt) * a0 + wt * at((k + 1).min(times.len() - 1))
    }
}

/// Bridge drift `sigma^2 d/dx log q(t,1;x,p_a)` (or `log L` for the atom) toward each
/// support point, for kernels without closed-form derivatives.
#[derive(Clone, Debug)]
pub struct TargetTable {
    pub times: TimeLattice,
    pub axis: SpaceAxis,
    targets: usize,
    d: Vec<f64>,
}

impl TargetTable {
    pub fn build(kernel: &dyn TransitionKernel, targets: &Marginal, times: TimeLattice, axis: SpaceAxis) -> Result<Self> {
        let nodes = axis.nodes();
        let n = axis.n;
        let nt = targets.len();
        let ell = kernel.domain().ell;
        let slices: Vec<Vec<f64>> = times
            .times
            .iter()
            .map(|&t| {
                let mut out = vec![0.0; nt * n];
                for (a, &p) in targets.points.iter().enumerate() {
                    for (i, &x) in nodes.iter().enumerate() {
                        if x <= ell {
                            continue;
                        }
                        let s2 = kernel.sigma(t, x).powi(2);
                        let g = if targets.has_atom && a == 0 {
                            kernel.log_default_dz(t, 1.0, x)
                        } else {
                            kernel.log_density_dz(t, 1.0, x, p)
                        };
                        out[a * n + i] = s2 * g;
                    }
                }
                out
            })
            .collect();
        Ok(Self { times, axis, targets: nt, d: slices.concat() })
    }

    #[inline]
    pub fn eval(&self, t: f64, a: usize, x: f64) -> f64 {
        lerp_target(&self.times, &self.axis, self.targets, &self.d, t, a, x)
    }
}
