//! Schrödinger bridges for (possibly killed) diffusions and the insider
//! equilibrium of a Kyle market with an entropic transaction cost.
//!
//! The pipeline runs bottom-up: a [`kernels::TransitionKernel`] fixes the signal
//! dynamics and its terminal law, [`schrodinger`] solves the entropic transport
//! problem for the terminal coupling, [`htransform`] turns that coupling into
//! drifts, [`simulate`] integrates the resulting systems, and [`kyle`] assembles
//! equilibrium quantities across entropic costs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod kernels;
pub mod kyle;
pub mod htransform;
pub mod quadrature;
pub mod schrodinger;
pub mod simulate;
pub mod special;

pub use error::{Error, Result};
