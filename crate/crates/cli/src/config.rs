//! Run configuration: TOML with strict key checking.
//!
//! ```toml
//! [kernel]
//! family = "brownian"      # brownian | killed_brownian | fd
//! ell = 0.0                # killing boundary; required for killed_brownian, optional for fd
//! z0 = 0.0
//! drift = 0.0              # fd only: b(z) = drift + drift_slope * z
//! drift_slope = 0.0
//! sigma = 1.0              # fd only: sigma(z) = sigma + sigma_slope * z
//! sigma_slope = 0.0
//! space_steps = 800
//! time_steps = 2000
//! threshold = 1e-10        # validate-kernel
//!
//! [grid]
//! z_upper = 8.0
//! nodes = 801
//!
//! [solver]
//! eps = 0.5                # sinkhorn, simulate
//! eps_list = [1.0, 0.5]    # sweep
//! tol = 1e-10
//! max_iter = 100000
//! cost = "quadratic"       # quadratic | bilinear
//! verify = false
//!
//! [sim]
//! system = "CONSTRAINED"
//! paths = 10000
//! steps = 2000
//! seed = 1
//! delta = 1e-3
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use kylebridge::kernels::{BrownianKernel, Domain, FdKernel, FdSpec, KilledBrownianKernel, TransitionKernel};
use kylebridge::schrodinger::{CostSpec, Payoff};
use kylebridge::simulate::SystemTag;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub sim: Option<SimSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Brownian,
    KilledBrownian,
    Fd,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default)]
    pub family: Family,
    pub ell: Option<f64>,
    #[serde(default)]
    pub z0: f64,
    #[serde(default)]
    pub drift: f64,
    #[serde(default)]
    pub drift_slope: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default)]
    pub sigma_slope: f64,
    #[serde(default = "fd_space")]
    pub space_steps: usize,
    #[serde(default = "fd_time")]
    pub time_steps: usize,
    pub threshold: Option<f64>,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            family: Family::Brownian,
            ell: None,
            z0: 0.0,
            drift: 0.0,
            drift_slope: 0.0,
            sigma: 1.0,
            sigma_slope: 0.0,
            space_steps: fd_space(),
            time_steps: fd_time(),
            threshold: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "z_upper")]
    pub z_upper: f64,
    #[serde(default = "nodes")]
    pub nodes: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { z_upper: z_upper(), nodes: nodes() }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    #[default]
    Quadratic,
    Bilinear,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub eps: Option<f64>,
    pub eps_list: Option<Vec<f64>>,
    #[serde(default = "tol")]
    pub tol: f64,
    #[serde(default = "max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub cost: CostKind,
    #[serde(default)]
    pub verify: bool,
    #[serde(default = "verify_tol")]
    pub verify_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            eps: None,
            eps_list: None,
            tol: tol(),
            max_iter: max_iter(),
            cost: CostKind::Quadratic,
            verify: false,
            verify_tol: verify_tol(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub system: String,
    pub paths: usize,
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "delta")]
    pub delta: f64,
    /// Fixed insider signal for CLASSICAL_KYLE.
    pub z1: Option<f64>,
    /// Second system simulated with `seed + 1` and compared slice by slice.
    pub compare: Option<String>,
    #[serde(default = "one_usize")]
    pub substeps: usize,
    #[serde(default)]
    pub dump: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn fd_space() -> usize {
    800
}
fn fd_time() -> usize {
    2000
}
fn z_upper() -> f64 {
    8.0
}
fn nodes() -> usize {
    801
}
fn tol() -> f64 {
    1e-10
}
fn max_iter() -> usize {
    100_000
}
fn verify_tol() -> f64 {
    1e-6
}
fn delta() -> f64 {
    1e-3
}

fn bad(key: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {reason}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Checks that do not depend on the subcommand.
    fn check(&self) -> Result<(), CliError> {
        let k = &self.kernel;
        if k.family == Family::KilledBrownian && k.ell.is_none() {
            return Err(bad("kernel.ell", "required for family killed_brownian"));
        }
        if k.family != Family::Fd && (k.drift != 0.0 || k.drift_slope != 0.0 || k.sigma != 1.0 || k.sigma_slope != 0.0) {
            return Err(bad("kernel", "drift and sigma coefficients apply to family fd only"));
        }
        if k.family == Family::Brownian && k.ell.is_some() {
            return Err(bad("kernel.ell", "family brownian has no killing boundary"));
        }
        if let Some(t) = k.threshold {
            if !(t > 0.0) {
                return Err(bad("kernel.threshold", format!("must be positive, got {t}")));
            }
        }
        if !(self.grid.z_upper > 0.0) || !self.grid.z_upper.is_finite() {
            return Err(bad("grid.z_upper", format!("must be positive, got {}", self.grid.z_upper)));
        }
        if self.grid.nodes < 3 {
            return Err(bad("grid.nodes", format!("need at least 3, got {}", self.grid.nodes)));
        }
        let s = &self.solver;
        if let Some(e) = s.eps {
            if !(e > 0.0) {
                return Err(bad("solver.eps", format!("must be positive, got {e}")));
            }
        }
        if let Some(list) = &s.eps_list {
            if list.is_empty() {
                return Err(bad("solver.eps_list", "empty list"));
            }
            if list.iter().any(|e| !(*e > 0.0)) || list.windows(2).any(|w| w[1] >= w[0]) {
                return Err(bad("solver.eps_list", format!("need positive, strictly decreasing values, got {list:?}")));
            }
        }
        if !(s.tol > 0.0) {
            return Err(bad("solver.tol", format!("must be positive, got {}", s.tol)));
        }
        if s.max_iter == 0 {
            return Err(bad("solver.max_iter", "must be positive"));
        }
        if let Some(sim) = &self.sim {
            sim.system.parse::<SystemTag>().map_err(|e| bad("sim.system", e))?;
            if let Some(c) = &sim.compare {
                c.parse::<SystemTag>().map_err(|e| bad("sim.compare", e))?;
            }
            if sim.paths == 0 {
                return Err(bad("sim.paths", "must be positive"));
            }
            if sim.steps < 100 {
                return Err(bad("sim.steps", format!("need at least 100, got {}", sim.steps)));
            }
            if !(sim.delta > 0.0 && sim.delta <= 0.01) {
                return Err(bad("sim.delta", format!("need 0 < delta <= 0.01, got {}", sim.delta)));
            }
            if sim.substeps == 0 {
                return Err(bad("sim.substeps", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn eps(&self) -> Result<f64, CliError> {
        self.solver.eps.ok_or_else(|| bad("solver.eps", "missing"))
    }

    pub fn eps_list(&self) -> Result<Vec<f64>, CliError> {
        self.solver.eps_list.clone().ok_or_else(|| bad("solver.eps_list", "missing"))
    }

    pub fn sim(&self) -> Result<&SimSection, CliError> {
        self.sim.as_ref().ok_or_else(|| bad("sim", "missing section"))
    }

    pub fn threshold(&self) -> f64 {
        self.kernel.threshold.unwrap_or(match self.kernel.family {
            Family::Fd => 1e-4,
            _ => 1e-10,
        })
    }

    pub fn cost(&self) -> CostSpec {
        match self.solver.cost {
            CostKind::Quadratic => CostSpec::Quadratic(Payoff::Identity),
            CostKind::Bilinear => CostSpec::Bilinear(Payoff::Identity),
        }
    }

    pub fn build_kernel(&self) -> Result<Arc<dyn TransitionKernel>, CliError> {
        let k = &self.kernel;
        let zu = self.grid.z_upper;
        let kernel: Arc<dyn TransitionKernel> = match k.family {
            Family::Brownian => Arc::new(BrownianKernel::new(zu).map_err(|e| bad("grid", e))?),
            Family::KilledBrownian => {
                Arc::new(KilledBrownianKernel::new(k.ell.unwrap_or(0.0), zu).map_err(|e| bad("kernel", e))?)
            }
            Family::Fd => {
                let domain = match k.ell {
                    Some(ell) => Domain::killed(ell, zu),
                    None => Domain::free(zu),
                }
                .map_err(|e| bad("kernel", e))?;
                let spec = FdSpec { space_steps: k.space_steps, time_steps: k.time_steps };
                let (b0, b1, s0, s1) = (k.drift, k.drift_slope, k.sigma, k.sigma_slope);
                Arc::new(FdKernel::new(domain, spec, move |z| b0 + b1 * z, move |z| s0 + s1 * z).map_err(|e| bad("kernel", e))?)
            }
        };
        Ok(kernel)
    }
}
