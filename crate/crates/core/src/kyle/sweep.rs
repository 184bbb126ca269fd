//! The sweep over decreasing entropic costs.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::htransform::{BridgeFields, Field, RhoNorm};
use crate::kernels::{eta_measure, TransitionKernel};
use crate::quadrature::QuadratureGrid;
use crate::schrodinger::{gaussian_closed_form, sinkhorn_solve, CostSpec, Payoff, SchrodingerSolution, SinkhornOptions};
use crate::simulate::{simulate, slice, DriftSystem, PairMoments, SimConfig, TableOptions};

use super::value_from_solution;

/// Optional simulation of the constrained system at every `eps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimSpec {
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub delta: f64,
}

#[derive(Clone)]
pub struct SweepConfig {
    pub eps: Vec<f64>,
    pub kernel: Arc<dyn TransitionKernel>,
    pub z0: f64,
    pub nodes: usize,
    pub cost: CostSpec,
    pub tol: f64,
    pub max_iter: usize,
    /// Drift lattice: `times` points on `[0, t_max]`, `points` per axis on `[-half, half]`.
    pub lattice_times: usize,
    pub lattice_points: usize,
    pub lattice_t_max: f64,
    pub lattice_half: f64,
    pub sim: Option<SimSpec>,
    pub table: TableOptions,
}

impl SweepConfig {
    pub fn new(eps: Vec<f64>, kernel: Arc<dyn TransitionKernel>) -> Self {
        Self {
            eps,
            kernel,
            z0: 0.0,
            nodes: 801,
            cost: CostSpec::Quadratic(Payoff::Identity),
            tol: 1e-10,
            max_iter: 100_000,
            lattice_times: 10,
            lattice_points: 9,
            lattice_t_max: 0.9,
            lattice_half: 2.0,
            sim: None,
            table: TableOptions::default(),
        }
    }

    fn check(&self) -> Result<()> {
        if self.eps.is_empty() {
            return Err(Error::InvalidParameter { name: "eps", reason: "empty list".into() });
        }
        if self.eps.iter().any(|e| !(*e > 0.0)) || self.eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter { name: "eps", reason: format!("need positive, strictly decreasing values, got {:?}", self.eps) });
        }
        if self.lattice_times < 2 || self.lattice_points < 2 {
            return Err(Error::InvalidParameter { name: "lattice", reason: "need at least two points per axis".into() });
        }
        Ok(())
    }

    /// `(t, y, z1)` lattice points inside the domain.
    fn lattice(&self) -> Vec<(f64, f64, f64)> {
        let dom = self.kernel.domain();
        let lin = |n: usize, a: f64, b: f64| (0..n).map(move |i| a + (b - a) * i as f64 / (n - 1) as f64);
        let mut pts = Vec::new();
        for t in lin(self.lattice_times, 0.0, self.lattice_t_max) {
            for y in lin(self.lattice_points, -self.lattice_half, self.lattice_half) {
                for z1 in lin(self.lattice_points, -self.lattice_half, self.lattice_half) {
                    if dom.contains(y) && dom.contains(z1) {
                        pts.push((t, y, z1));
                    }
                }
            }
        }
        pts
    }
}

/// One `eps` of the sweep. Entries that could not be computed are `NaN`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub lambda: f64,
    pub value: f64,
    pub entropy: f64,
    /// Root-mean-square gap between the constrained drift and `(z1 - y) / (1 - t)`.
    pub drift_gap: f64,
    pub corr_sim: f64,
    pub corr_theory: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }

    /// Whether the drift gap decreases strictly along the sweep.
    pub fn gap_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].drift_gap < w[0].drift_gap)
    }
}

fn drift_gap(cfg: &SweepConfig, sol: &SchrodingerSolution, lattice: &[(f64, f64, f64)]) -> Result<f64> {
    let fields = BridgeFields::new(cfg.kernel.clone(), sol.coupling.clone(), cfg.z0)?;
    let sq: Vec<f64> = lattice
        .par_iter()
        .map(|&(t, y, z1)| {
            let g = fields.grad_log(Field::Rho { z1, norm: RhoNorm::Raw }, t, 0.0, y)?;
            let d = cfg.kernel.sigma(t, y).powi(2) * g.dy - (z1 - y) / (1.0 - t);
            Ok(d * d)
        })
        .collect::<Result<_>>()?;
    Ok((sq.iter().sum::<f64>() / sq.len() as f64).sqrt())
}

fn simulated_corr(cfg: &SweepConfig, sol: &SchrodingerSolution, spec: &SimSpec) -> Result<f64> {
    let sys = DriftSystem::constrained(cfg.kernel.clone(), &sol.coupling, cfg.table)?;
    let sim = SimConfig::new(spec.steps, spec.paths, spec.seed).start(cfg.z0).delta(spec.delta);
    let ens = simulate(&sys, &sim)?;
    let (z, y) = slice(&ens, ens.times.len() - 1);
    Ok(PairMoments::of(&z, &y).corr())
}

/// Solves the Schrödinger system for each `eps` in turn, warm-starting from the
/// previous converged solution. A solver failure flags its row and the sweep goes on.
pub fn eps_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.check()?;
    let grid = QuadratureGrid::uniform(cfg.kernel.domain(), cfg.nodes)?;
    let eta = eta_measure(cfg.kernel.as_ref(), &grid, cfg.z0)?;
    let lattice = cfg.lattice();
    let mut warm: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut rows = Vec::with_capacity(cfg.eps.len());
    for &eps in &cfg.eps {
        let lambda = gaussian_closed_form(eps)?.lambda;
        let mut opts = SinkhornOptions::new(eps).tol(cfg.tol).max_iter(cfg.max_iter);
        if let Some((phi, psi)) = warm.clone() {
            opts = opts.warm_start(phi, psi);
        }
        let mut row = SweepRow {
            eps,
            lambda,
            value: f64::NAN,
            entropy: f64::NAN,
            drift_gap: f64::NAN,
            corr_sim: f64::NAN,
            corr_theory: f64::NAN,
            converged: false,
            iterations: 0,
            residual: f64::NAN,
        };
        match sinkhorn_solve(&eta, &eta, &cfg.cost, &opts) {
            Ok(sol) => {
                row.converged = true;
                row.iterations = sol.iterations;
                row.residual = sol.residual;
                row.value = value_from_solution(&sol);
                row.entropy = sol.coupling.relative_entropy();
                row.corr_theory = sol.coupling.joint().moments().corr();
                row.drift_gap = drift_gap(cfg, &sol, &lattice)?;
                if let Some(spec) = &cfg.sim {
                    row.corr_sim = simulated_corr(cfg, &sol, spec)?;
                }
                warm = Some((sol.phi.clone(), sol.psi.clone()));
            }
            Err(Error::NotConverged { iterations, residual }) => {
                row.iterations = iterations;
                row.residual = residual;
            }
            Err(e) => return Err(e),
        }
        rows.push(row);
    }
    Ok(SweepResult { rows })
}

pub fn write_sweep_csv(res: &SweepResult, mut w: impl Write) -> Result<()> {
    writeln!(w, "eps,lambda,value,entropy,drift_gap,corr_sim,corr_theory,converged")?;
    for r in &res.rows {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.eps, r.lambda, r.value, r.entropy, r.drift_gap, r.corr_sim, r.corr_theory, r.converged
        )?;
    }
    Ok(())
}
