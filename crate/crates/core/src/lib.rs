//! Numerical toolkit for the scalar linear Volterra equation
//!
//! ```text
//! dX(t) = (a X(t) + ∫_0^t k(t-s) X(s) ds) dt + σ dB(t)
//! ```
//!
//! and its discrete twin. It tabulates the resolvent `r`, builds the
//! stationary autocovariance `c(t) = σ² ∫ r(s) r(s+t) ds`, evaluates the
//! closed-form decay constants for the long-memory and subexponential
//! regimes, and simulates sample paths to cross-check all of it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod autocovariance;
pub mod config;
pub mod conv;
pub mod error;
pub mod fit;
pub mod gamma;
pub mod io;
pub mod kernels;
pub mod par;
pub mod quad;
pub mod resolvent;
pub mod simulate;
pub mod verify;

pub use error::{Error, Result};
pub use kernels::{KernelFamily, KernelSpec, Regime, RegimeClass, TimeMode};
