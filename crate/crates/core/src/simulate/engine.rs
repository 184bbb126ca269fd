//! Euler–Maruyama integration of a [`DriftSystem`] over many paths.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::system::{DriftSystem, SystemTag, YDrift};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    /// The stochastic grid stops at `1 - delta`; one deterministic step with the
    /// frozen drift closes the interval.
    pub delta: f64,
    pub z0: f64,
    pub y0: f64,
    /// Times to record; values at or above one select the closed terminal state.
    pub record_times: Vec<f64>,
    /// Also record every `k`-th grid point.
    pub record_stride: Option<usize>,
    /// Each Brownian increment is the sum of this many finer normal draws, so runs
    /// with `steps * noise_substeps` fixed share their noise.
    pub noise_substeps: usize,
    /// Brownian-bridge correction for crossings of the killing level between grid points.
    pub crossing_correction: bool,
}

impl SimConfig {
    pub fn new(steps: usize, paths: usize, seed: u64) -> Self {
        Self {
            steps,
            paths,
            seed,
            delta: 1e-3,
            z0: 0.0,
            y0: 0.0,
            record_times: vec![0.25, 0.5, 0.75, 1.0 - 1e-3, 1.0],
            record_stride: None,
            noise_substeps: 1,
            crossing_correction: true,
        }
    }

    pub fn start(mut self, z0: f64) -> Self {
        self.z0 = z0;
        self.y0 = z0;
        self
    }

    pub fn delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        if let Some(t) = self.record_times.iter_mut().find(|t| (**t - (1.0 - 1e-3)).abs() < 1e-15) {
            *t = 1.0 - delta;
        }
        self
    }

    pub fn record(mut self, times: Vec<f64>) -> Self {
        self.record_times = times;
        self
    }

    pub fn substeps(mut self, k: usize) -> Self {
        self.noise_substeps = k;
        self
    }

    fn check(&self) -> Result<()> {
        if self.steps < 100 {
            return Err(Error::InvalidParameter { name: "steps", reason: format!("need at least 100, got {}", self.steps) });
        }
        if self.paths == 0 || self.noise_substeps == 0 {
            return Err(Error::InvalidParameter { name: "paths", reason: "paths and noise_substeps must be positive".into() });
        }
        if !(self.delta > 0.0 && self.delta <= 0.01) {
            return Err(Error::InvalidParameter { name: "delta", reason: format!("need 0 < delta <= 0.01, got {}", self.delta) });
        }
        Ok(())
    }
}

/// Recorded states of a simulated ensemble. Aborted paths hold `NaN`.
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    pub tag: SystemTag,
    pub seed: u64,
    pub steps: usize,
    pub delta: f64,
    pub times: Vec<f64>,
    /// `paths x times`.
    pub z: Array2<f64>,
    pub y: Array2<f64>,
    /// Terminal target of each path (`NaN` for systems without one).
    pub z1: Vec<f64>,
    /// Absorption times (`inf` when never absorbed).
    pub absorbed_z: Vec<f64>,
    pub absorbed_y: Vec<f64>,
    /// `1/2 int |control|^2 / sigma^2 dt` per path and coordinate.
    pub action_z: Vec<f64>,
    pub action_y: Vec<f64>,
    pub aborted: usize,
    /// First non-finite state encountered, as `(t, z, y)`.
    pub first_failure: Option<(f64, f64, f64)>,
}

impl PathEnsemble {
    pub fn paths(&self) -> usize {
        self.z.nrows()
    }

    /// Index of the recorded time closest to `t`.
    pub fn time_index(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, s) in self.times.iter().enumerate() {
            if (s - t).abs() < (self.times[best] - t).abs() {
                best = i;
            }
        }
        best
    }

    /// Fraction of paths whose signal coordinate was absorbed by time `t`.
    pub fn absorption_frequency(&self, t: f64) -> f64 {
        let live: Vec<&f64> = self.absorbed_z.iter().zip(self.z.column(0)).filter(|(_, z)| z.is_finite()).map(|(a, _)| a).collect();
        live.iter().filter(|a| ***a <= t).count() as f64 / live.len().max(1) as f64
    }
}

struct PathOut {
    z: Vec<f64>,
    y: Vec<f64>,
    z1: f64,
    abs_z: f64,
    abs_y: f64,
    act_z: f64,
    act_y: f64,
    failure: Option<(f64, f64, f64)>,
}

/// Grid indices to record plus whether the closed terminal state is requested.
fn record_plan(cfg: &SimConfig, dt: f64) -> (Vec<usize>, bool) {
    let mut idx: Vec<usize> = Vec::new();
    let mut terminal = false;
    for &t in &cfg.record_times {
        if t >= 1.0 - 1e-12 {
            terminal = true;
        } else {
            idx.push(((t.max(0.0) / dt).round() as usize).min(cfg.steps));
        }
    }
    if let Some(k) = cfg.record_stride.filter(|k| *k > 0) {
        idx.extend((0..=cfg.steps).step_by(k));
    }
    idx.sort_unstable();
    idx.dedup();
    (idx, terminal)
}

impl DriftSystem {
    /// Bridge drift `sigma^2 d/dx log q(t,1;x,target)` (or toward the atom).
    #[inline]
    fn bridge(&self, t: f64, x: f64, target: f64, index: usize) -> f64 {
        let k = self.kernel.as_ref();
        if let Some(tab) = &self.targets {
            return tab.eval(t, index, x);
        }
        let s2 = k.sigma(t, x).powi(2);
        if target <= k.domain().ell {
            s2 * k.log_default_dz(t, 1.0, x)
        } else {
            s2 * k.log_density_dz(t, 1.0, x, target)
        }
    }

    /// Total drifts `(mu_z, mu_y)` and controls `(alpha_z, alpha_y)` for live coordinates.
    #[inline]
    fn drifts(&self, t: f64, z: f64, y: f64, target: f64, index: usize) -> (f64, f64, f64, f64) {
        let k = self.kernel.as_ref();
        let (bz, by) = (k.drift(t, z), k.drift(t, y));
        let (cz, cy) = match &self.y_drift {
            YDrift::Base => (0.0, 0.0),
            YDrift::Table(tab) => tab.eval(t, z, y),
            YDrift::Rho(tab) => (self.bridge(t, z, target, index), tab.eval(t, index, y)),
            YDrift::Bridge => (self.bridge(t, z, target, index), self.bridge(t, y, target, index)),
            YDrift::Classical => (self.bridge(t, z, target, index), (target - y) / (1.0 - t)),
        };
        let cy = cy + self.control_shift;
        (bz + cz, by + cy, cz, cy)
    }
}

/// Simulates `cfg.paths` independent paths. Path `p` draws its normals from the
/// ChaCha8 stream `2p` and its uniforms from stream `2p + 1`, so results do not
/// depend on the thread count.
pub fn simulate(system: &DriftSystem, cfg: &SimConfig) -> Result<PathEnsemble> {
    cfg.check()?;
    let dom = *system.kernel.domain();
    if !dom.contains(cfg.z0) || !dom.contains(cfg.y0) {
        return Err(Error::OutsideDomain { value: cfg.z0.min(cfg.y0), ell: dom.ell });
    }
    let t_end = 1.0 - cfg.delta;
    let dt = t_end / cfg.steps as f64;
    let (plan, want_terminal) = record_plan(cfg, dt);
    let mut times: Vec<f64> = plan.iter().map(|&k| k as f64 * dt).collect();
    if want_terminal {
        times.push(1.0);
    }
    let ell = dom.ell;
    let sub = cfg.noise_substeps;
    let sub_scale = (dt / sub as f64).sqrt();

    let run = |p: usize| -> PathOut {
        let mut rn = ChaCha8Rng::seed_from_u64(cfg.seed);
        rn.set_stream(2 * p as u64);
        let mut ru = ChaCha8Rng::seed_from_u64(cfg.seed);
        ru.set_stream(2 * p as u64 + 1);

        let (index, target) = match (&system.terminal, system.fixed_terminal) {
            (_, Some(v)) => (0, v),
            (Some(law), None) => {
                let i = law.index(ru.random::<f64>());
                (i, law.points[i])
            }
            (None, None) => (0, f64::NAN),
        };

        let (mut z, mut y) = (cfg.z0, cfg.y0);
        let (mut abs_z, mut abs_y) = (f64::INFINITY, f64::INFINITY);
        let (mut act_z, mut act_y) = (0.0, 0.0);
        let mut out = PathOut {
            z: Vec::with_capacity(times.len()),
            y: Vec::with_capacity(times.len()),
            z1: target,
            abs_z,
            abs_y,
            act_z,
            act_y,
            failure: None,
        };
        let mut next_rec = 0;
        let record = |k: usize, z: f64, y: f64, out: &mut PathOut, next: &mut usize| {
            while *next < plan.len() && plan[*next] == k {
                out.z.push(z);
                out.y.push(y);
                *next += 1;
            }
        };
        record(0, z, y, &mut out, &mut next_rec);

        let mut failed = false;
        for k in 0..cfg.steps {
            let t = k as f64 * dt;
            let z_live = abs_z.is_infinite();
            let y_live = abs_y.is_infinite();
            let (mz, my, cz, cy) = system.drifts(t, z, y, target, index);
            let mut dwz = 0.0;
            let mut dwy = 0.0;
            for _ in 0..sub {
                dwz += rn.sample::<f64, _>(StandardNormal);
                dwy += rn.sample::<f64, _>(StandardNormal);
            }
            dwz *= sub_scale;
            dwy *= sub_scale;
            let t1 = (k + 1) as f64 * dt;

            if z_live {
                let s = system.kernel.sigma(t, z);
                act_z += 0.5 * cz * cz / (s * s) * dt;
                let zn = z + mz * dt + s * dwz;
                let u: f64 = if cfg.crossing_correction && dom.is_killed() { ru.random() } else { 1.0 };
                if zn <= ell || (cfg.crossing_correction && u < (-2.0 * (z - ell) * (zn - ell) / (s * s * dt)).exp()) {
                    z = ell;
                    abs_z = t1;
                } else {
                    z = zn;
                }
            }
            if y_live {
                let s = system.kernel.sigma(t, y);
                act_y += 0.5 * cy * cy / (s * s) * dt;
                let yn = y + my * dt + s * dwy;
                let u: f64 = if cfg.crossing_correction && dom.is_killed() { ru.random() } else { 1.0 };
                if yn <= ell || (cfg.crossing_correction && u < (-2.0 * (y - ell) * (yn - ell) / (s * s * dt)).exp()) {
                    y = ell;
                    abs_y = t1;
                } else {
                    y = yn;
                }
            }
            if !(z.is_finite() && y.is_finite()) {
                out.failure = Some((t, z, y));
                failed = true;
                break;
            }
            record(k + 1, z, y, &mut out, &mut next_rec);
        }

        if !failed {
            // closing step over [1 - delta, 1] with the frozen drift
            let (mz, my, cz, cy) = system.drifts(t_end, z, y, target, index);
            if abs_z.is_infinite() {
                let s = system.kernel.sigma(t_end, z);
                act_z += 0.5 * cz * cz / (s * s) * cfg.delta;
                let zn = z + mz * cfg.delta;
                if zn <= ell {
                    z = ell;
                    abs_z = 1.0;
                } else {
                    z = zn;
                }
            }
            if abs_y.is_infinite() {
                let s = system.kernel.sigma(t_end, y);
                act_y += 0.5 * cy * cy / (s * s) * cfg.delta;
                let yn = y + my * cfg.delta;
                if yn <= ell {
                    y = ell;
                    abs_y = 1.0;
                } else {
                    y = yn;
                }
            }
            if !(z.is_finite() && y.is_finite()) {
                out.failure = Some((t_end, z, y));
                failed = true;
            }
        }
        if failed {
            out.z = vec![f64::NAN; times.len()];
            out.y = vec![f64::NAN; times.len()];
            out.act_z = f64::NAN;
            out.act_y = f64::NAN;
            return out;
        }
        if want_terminal {
            out.z.push(z);
            out.y.push(y);
        }
        out.abs_z = abs_z;
        out.abs_y = abs_y;
        out.act_z = act_z;
        out.act_y = act_y;
        out
    };

    let outs: Vec<PathOut> = (0..cfg.paths).into_par_iter().map(run).collect();

    let nt = times.len();
    let mut ens = PathEnsemble {
        tag: system.tag,
        seed: cfg.seed,
        steps: cfg.steps,
        delta: cfg.delta,
        times,
        z: Array2::zeros((cfg.paths, nt)),
        y: Array2::zeros((cfg.paths, nt)),
        z1: Vec::with_capacity(cfg.paths),
        absorbed_z: Vec::with_capacity(cfg.paths),
        absorbed_y: Vec::with_capacity(cfg.paths),
        action_z: Vec::with_capacity(cfg.paths),
        action_y: Vec::with_capacity(cfg.paths),
        aborted: 0,
        first_failure: None,
    };
    for (p, o) in outs.into_iter().enumerate() {
        if let Some(f) = o.failure {
            ens.aborted += 1;
            ens.first_failure.get_or_insert(f);
        }
        ens.z.row_mut(p).assign(&ndarray::ArrayView1::from(&o.z));
        ens.y.row_mut(p).assign(&ndarray::ArrayView1::from(&o.y));
        ens.z1.push(o.z1);
        ens.absorbed_z.push(o.abs_z);
        ens.absorbed_y.push(o.abs_y);
        ens.action_z.push(o.act_z);
        ens.action_y.push(o.act_y);
    }
    Ok(ens)
}
