//! Monte Carlo simulation of the signal / order-flow systems.

mod engine;
pub mod io;
mod stats;
mod system;

pub use engine::{simulate, PathEnsemble, SimConfig};
pub use stats::{
    energy_distance, entropy_estimate, equivalence_check, slice, terminal_gap, Action, Estimate, EquivalenceReport, Gap, PairMoments,
    SliceComparison,
};
pub use system::{DriftSystem, SystemTag, TableOptions, TerminalLaw};
