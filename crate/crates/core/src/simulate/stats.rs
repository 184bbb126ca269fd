//! Ensemble statistics: pathwise entropy and two-sample comparisons.

use ndarray::ArrayView1;

use super::engine::PathEnsemble;
use crate::error::{Error, Result};

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self { mean, stderr: (var / n).sqrt() }
    }

    /// `|mean - target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.stderr
    }
}

/// Which control the entropy estimate integrates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    /// The order-flow control alone (the insider's strategy).
    Y,
    /// Both coordinates, i.e. the relative entropy of the path law to the reference.
    Both,
}

/// Mean of `1/2 int alpha^2 / sigma^2 dt` over the non-aborted paths.
pub fn entropy_estimate(ens: &PathEnsemble, which: Action) -> Result<Estimate> {
    let a: Vec<f64> = match which {
        Action::Y => ens.action_y.iter().copied().filter(|v| v.is_finite()).collect(),
        Action::Both => ens.action_z.iter().zip(&ens.action_y).map(|(a, b)| a + b).filter(|v| v.is_finite()).collect(),
    };
    if a.len() < 2 {
        return Err(Error::Shape(format!("{} usable paths", a.len())));
    }
    Ok(Estimate::from_samples(&a))
}

/// Difference of one statistic between two ensembles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gap {
    pub a: f64,
    pub b: f64,
    pub stderr: f64,
}

impl Gap {
    pub fn diff(&self) -> f64 {
        self.a - self.b
    }

    /// `|a - b| <= k * stderr` (exact equality counts as within).
    pub fn within(&self, k: f64) -> bool {
        self.diff().abs() <= k * self.stderr
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SliceComparison {
    pub t: f64,
    pub mean_z: Gap,
    pub mean_y: Gap,
    pub var_z: Gap,
    pub var_y: Gap,
    pub corr: Gap,
    pub energy_distance: f64,
}

impl SliceComparison {
    pub fn gaps(&self) -> [(&'static str, Gap); 5] {
        [("mean_z", self.mean_z), ("mean_y", self.mean_y), ("var_z", self.var_z), ("var_y", self.var_y), ("corr", self.corr)]
    }

    pub fn within(&self, k: f64) -> bool {
        self.gaps().iter().all(|(_, g)| g.within(k))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    pub slices: Vec<SliceComparison>,
}

impl EquivalenceReport {
    pub fn within(&self, k: f64) -> bool {
        self.slices.iter().all(|s| s.within(k))
    }
}

/// Means, variances and correlation of a 2-D sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairMoments {
    pub n: usize,
    pub mean_z: f64,
    pub mean_y: f64,
    pub var_z: f64,
    pub var_y: f64,
    pub cov: f64,
}

impl PairMoments {
    pub fn of(z: &[f64], y: &[f64]) -> Self {
        let n = z.len() as f64;
        let mz = z.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let (mut vz, mut vy, mut c) = (0.0, 0.0, 0.0);
        for (a, b) in z.iter().zip(y) {
            vz += (a - mz) * (a - mz);
            vy += (b - my) * (b - my);
            c += (a - mz) * (b - my);
        }
        let d = (n - 1.0).max(1.0);
        Self { n: z.len(), mean_z: mz, mean_y: my, var_z: vz / d, var_y: vy / d, cov: c / d }
    }

    pub fn corr(&self) -> f64 {
        self.cov / (self.var_z * self.var_y).sqrt()
    }

    fn stats(&self) -> [f64; 5] {
        [self.mean_z, self.mean_y, self.var_z, self.var_y, self.corr()]
    }
}

/// Finite `(Z_t, Y_t)` pairs at column `j`.
pub fn slice(ens: &PathEnsemble, j: usize) -> (Vec<f64>, Vec<f64>) {
    let (zc, yc) = (ens.z.column(j), ens.y.column(j));
    zc.iter().zip(yc.iter()).filter(|(a, b)| a.is_finite() && b.is_finite()).map(|(a, b)| (*a, *b)).unzip()
}

const BATCHES: usize = 50;

/// Full-sample statistics with batch-means standard errors.
fn stats_with_errors(z: &[f64], y: &[f64]) -> ([f64; 5], [f64; 5]) {
    let full = PairMoments::of(z, y).stats();
    let b = BATCHES.min(z.len() / 20).max(2);
    let size = z.len() / b;
    let per: Vec<[f64; 5]> = (0..b).map(|k| PairMoments::of(&z[k * size..(k + 1) * size], &y[k * size..(k + 1) * size]).stats()).collect();
    let mut se = [0.0; 5];
    for (i, s) in se.iter_mut().enumerate() {
        let m = per.iter().map(|p| p[i]).sum::<f64>() / b as f64;
        let v = per.iter().map(|p| (p[i] - m).powi(2)).sum::<f64>() / (b - 1) as f64;
        *s = (v / b as f64).sqrt();
    }
    (full, se)
}

/// V-statistic energy distance between two 2-D samples, each thinned to at most `max_points`.
pub fn energy_distance(a: (&[f64], &[f64]), b: (&[f64], &[f64]), max_points: usize) -> f64 {
    let thin = |(z, y): (&[f64], &[f64])| -> Vec<(f64, f64)> {
        let step = z.len().div_ceil(max_points).max(1);
        z.iter().zip(y).step_by(step).map(|(a, b)| (*a, *b)).collect()
    };
    let (pa, pb) = (thin(a), thin(b));
    let mean_dist = |p: &[(f64, f64)], q: &[(f64, f64)]| -> f64 {
        let mut s = 0.0;
        for x in p {
            for y in q {
                s += ((x.0 - y.0).powi(2) + (x.1 - y.1).powi(2)).sqrt();
            }
        }
        s / (p.len() * q.len()) as f64
    };
    2.0 * mean_dist(&pa, &pb) - mean_dist(&pa, &pa) - mean_dist(&pb, &pb)
}

/// Compares two ensembles at the recorded times closest to `times`.
pub fn equivalence_check(a: &PathEnsemble, b: &PathEnsemble, times: &[f64]) -> Result<EquivalenceReport> {
    let mut slices = Vec::with_capacity(times.len());
    for &t in times {
        let (ja, jb) = (a.time_index(t), b.time_index(t));
        if (a.times[ja] - b.times[jb]).abs() > 1e-9 {
            return Err(Error::Shape(format!("time {t} recorded as {} and {}", a.times[ja], b.times[jb])));
        }
        let (za, ya) = slice(a, ja);
        let (zb, yb) = slice(b, jb);
        if za.len() < 40 || zb.len() < 40 {
            return Err(Error::Shape("too few finite paths to compare".into()));
        }
        let (sa, ea) = stats_with_errors(&za, &ya);
        let (sb, eb) = stats_with_errors(&zb, &yb);
        let gap = |i: usize| Gap { a: sa[i], b: sb[i], stderr: ea[i].hypot(eb[i]) };
        slices.push(SliceComparison {
            t: a.times[ja],
            mean_z: gap(0),
            mean_y: gap(1),
            var_z: gap(2),
            var_y: gap(3),
            corr: gap(4),
            energy_distance: energy_distance((&za, &ya), (&zb, &yb), 2000),
        });
    }
    Ok(EquivalenceReport { slices })
}

/// Mean of `|Y_t - Z_1|` at the recorded time closest to `t`.
pub fn terminal_gap(ens: &PathEnsemble, t: f64) -> Estimate {
    let j = ens.time_index(t);
    let y: ArrayView1<f64> = ens.y.column(j);
    let gaps: Vec<f64> = y.iter().zip(&ens.z1).map(|(y, z)| (y - z).abs()).filter(|g| g.is_finite()).collect();
    Estimate::from_samples(&gaps)
}
