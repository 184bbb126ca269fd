//! Drift specifications of the simulated two-dimensional systems `(Z, Y)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::htransform::{DriftTable, RhoTable, SpaceAxis, TargetTable, TimeLattice};
use crate::kernels::TransitionKernel;
use crate::quadrature::DiscreteMeasure;
use crate::schrodinger::{Coupling, Marginal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SystemTag {
    /// Two independent copies of the signal diffusion.
    Reference,
    /// h-transform of the reference by the terminal coupling (or its diagonal limit).
    UnconstrainedBridge,
    /// `Z_1 ~ eta`, order flow driven by `rho(t, Y; Z_1)`.
    Constrained,
    /// `Z_1 ~ f1 eta`, order flow driven by the normalised `rho`.
    FiveLemma,
    /// Both coordinates bridged to a common `Z_1 ~ eta`.
    Limit,
    /// Classical Kyle insider, `dY = (Z_1 - Y) / (1 - t) dt + dW`.
    ClassicalKyle,
}

impl SystemTag {
    pub const ALL: [SystemTag; 6] = [
        SystemTag::Reference,
        SystemTag::UnconstrainedBridge,
        SystemTag::Constrained,
        SystemTag::FiveLemma,
        SystemTag::Limit,
        SystemTag::ClassicalKyle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SystemTag::Reference => "REFERENCE",
            SystemTag::UnconstrainedBridge => "UNCONSTRAINED_BRIDGE",
            SystemTag::Constrained => "CONSTRAINED",
            SystemTag::FiveLemma => "FIVE_LEMMA",
            SystemTag::Limit => "LIMIT",
            SystemTag::ClassicalKyle => "CLASSICAL_KYLE",
        }
    }
}

impl fmt::Display for SystemTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Self::ALL.into_iter().find(|t| t.as_str() == norm).ok_or_else(|| Error::InvalidParameter {
            name: "system",
            reason: format!("unknown system tag {s:?}"),
        })
    }
}

/// Discrete law of the terminal signal, sampled by inversion.
#[derive(Clone, Debug)]
pub struct TerminalLaw {
    pub points: Vec<f64>,
    cdf: Vec<f64>,
}

impl TerminalLaw {
    pub fn new(points: Vec<f64>, weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::DegenerateTerminal(format!("weights sum to {total}")));
        }
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Ok(Self { points, cdf })
    }

    pub fn from_marginal(m: &Marginal) -> Result<Self> {
        Self::new(m.points.clone(), &m.mass)
    }

    /// Support index for a uniform draw `u` in `[0, 1)`.
    #[inline]
    pub fn index(&self, u: f64) -> usize {
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }

    pub fn mean(&self) -> f64 {
        let mut prev = 0.0;
        self.points
            .iter()
            .zip(&self.cdf)
            .map(|(x, c)| {
                let w = c - prev;
                prev = *c;
                w * x
            })
            .sum()
    }
}

/// Lattice and window used when a drift has to be tabulated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableOptions {
    pub t_end: f64,
    pub uniform: usize,
    pub geometric: usize,
    pub half_width: f64,
    pub nodes: usize,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self { t_end: 0.999, uniform: 91, geometric: 30, half_width: 6.0, nodes: 201 }
    }
}

impl TableOptions {
    fn lattice(&self, kernel: &dyn TransitionKernel) -> Result<TimeLattice> {
        let lat = TimeLattice::bridge(self.t_end, self.uniform, self.geometric)?;
        Ok(match kernel.time_step() {
            Some(dt) => lat.snapped(dt),
            None => lat,
        })
    }

    fn axis(&self, kernel: &dyn TransitionKernel) -> Result<SpaceAxis> {
        SpaceAxis::for_kernel(kernel, self.half_width, self.nodes)
    }
}

pub(crate) enum YDrift {
    Base,
    Table(DriftTable),
    Rho(RhoTable),
    Bridge,
    Classical,
}

/// A simulated system: kernel, terminal law and drift sources.
pub struct DriftSystem {
    pub tag: SystemTag,
    pub(crate) kernel: Arc<dyn TransitionKernel>,
    pub(crate) terminal: Option<TerminalLaw>,
    pub(crate) fixed_terminal: Option<f64>,
    pub(crate) y_drift: YDrift,
    pub(crate) targets: Option<TargetTable>,
    pub(crate) control_shift: f64,
}

impl DriftSystem {
    pub fn reference(kernel: Arc<dyn TransitionKernel>) -> Self {
        Self {
            tag: SystemTag::Reference,
            kernel,
            terminal: None,
            fixed_terminal: None,
            y_drift: YDrift::Base,
            targets: None,
            control_shift: 0.0,
        }
    }

    /// h-transform of the reference by the coupling density `f`.
    pub fn unconstrained(kernel: Arc<dyn TransitionKernel>, coupling: &Coupling, opts: TableOptions) -> Result<Self> {
        let table = DriftTable::from_coupling(kernel.as_ref(), coupling, opts.lattice(kernel.as_ref())?, opts.axis(kernel.as_ref())?)?;
        Ok(Self { tag: SystemTag::UnconstrainedBridge, y_drift: YDrift::Table(table), ..Self::reference(kernel) })
    }

    /// h-transform by the diagonal limit `h0`, i.e. the drift `(Gamma(t,Z,Y), Gamma(t,Y,Z))`.
    pub fn unconstrained_limit(kernel: Arc<dyn TransitionKernel>, eta: &DiscreteMeasure, opts: TableOptions) -> Result<Self> {
        let m = Marginal::from_measure(&eta.normalized()?);
        let table = DriftTable::limit(kernel.as_ref(), &m, opts.lattice(kernel.as_ref())?, opts.axis(kernel.as_ref())?)?;
        Ok(Self { tag: SystemTag::UnconstrainedBridge, y_drift: YDrift::Table(table), ..Self::reference(kernel) })
    }

    fn conditioned(
        tag: SystemTag,
        kernel: Arc<dyn TransitionKernel>,
        coupling: &Coupling,
        law: TerminalLaw,
        opts: TableOptions,
    ) -> Result<Self> {
        let lattice = opts.lattice(kernel.as_ref())?;
        let axis = opts.axis(kernel.as_ref())?;
        let rho = RhoTable::build(kernel.as_ref(), coupling, lattice.clone(), axis)?;
        let targets = Self::target_table(kernel.as_ref(), &coupling.z, lattice, axis)?;
        Ok(Self { tag, terminal: Some(law), y_drift: YDrift::Rho(rho), targets, ..Self::reference(kernel) })
    }

    fn target_table(kernel: &dyn TransitionKernel, m: &Marginal, lattice: TimeLattice, axis: SpaceAxis) -> Result<Option<TargetTable>> {
        if kernel.exact_derivatives() {
            Ok(None)
        } else {
            TargetTable::build(kernel, m, lattice, axis).map(Some)
        }
    }

    /// `Z_1` drawn from the first marginal of the coupling.
    pub fn constrained(kernel: Arc<dyn TransitionKernel>, coupling: &Coupling, opts: TableOptions) -> Result<Self> {
        let law = TerminalLaw::from_marginal(&coupling.z)?;
        Self::conditioned(SystemTag::Constrained, kernel, coupling, law, opts)
    }

    /// `Z_1` drawn from `f1 eta`.
    pub fn five_lemma(kernel: Arc<dyn TransitionKernel>, coupling: &Coupling, opts: TableOptions) -> Result<Self> {
        let w: Vec<f64> = coupling.f1.iter().zip(&coupling.z.mass).map(|(f, m)| f * m).collect();
        let law = TerminalLaw::new(coupling.z.points.clone(), &w)?;
        Self::conditioned(SystemTag::FiveLemma, kernel, coupling, law, opts)
    }

    /// Both coordinates bridged to a common `Z_1 ~ eta`.
    pub fn limit(kernel: Arc<dyn TransitionKernel>, eta: &DiscreteMeasure, opts: TableOptions) -> Result<Self> {
        let m = Marginal::from_measure(&eta.normalized()?);
        let law = TerminalLaw::from_marginal(&m)?;
        let targets = Self::target_table(kernel.as_ref(), &m, opts.lattice(kernel.as_ref())?, opts.axis(kernel.as_ref())?)?;
        Ok(Self { tag: SystemTag::Limit, terminal: Some(law), y_drift: YDrift::Bridge, targets, ..Self::reference(kernel) })
    }

    /// Classical Kyle bridge. `z1 = Some(v)` pins the signal; otherwise `Z_1 ~ eta`.
    pub fn classical_kyle(kernel: Arc<dyn TransitionKernel>, eta: Option<&DiscreteMeasure>, z1: Option<f64>) -> Result<Self> {
        if !kernel.exact_derivatives() || kernel.domain().is_killed() {
            return Err(Error::InvalidParameter {
                name: "kernel",
                reason: "the classical Kyle bridge needs the Brownian reference".into(),
            });
        }
        let terminal = match (z1, eta) {
            (Some(_), _) => None,
            (None, Some(e)) => Some(TerminalLaw::from_marginal(&Marginal::from_measure(&e.normalized()?))?),
            (None, None) => return Err(Error::DegenerateTerminal("need a terminal law or a fixed z1".into())),
        };
        Ok(Self {
            tag: SystemTag::ClassicalKyle,
            terminal,
            fixed_terminal: z1,
            y_drift: YDrift::Classical,
            ..Self::reference(kernel)
        })
    }

    /// Adds a constant to the order-flow control (for perturbation studies).
    pub fn with_control_shift(mut self, c: f64) -> Self {
        self.control_shift = c;
        self
    }

    pub fn kernel(&self) -> &Arc<dyn TransitionKernel> {
        &self.kernel
    }

    pub fn has_terminal(&self) -> bool {
        self.terminal.is_some() || self.fixed_terminal.is_some()
    }
}
