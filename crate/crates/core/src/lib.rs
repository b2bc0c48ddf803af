//! Solvers for the macroscopic market-making problem.
//!
//! Order flows are modelled as continuous rates rather than point processes.
//! The crate computes optimal bid/ask quotes through three routes:
//!
//! * [`riccati`]: backward ODEs for deterministic coefficients with a linear
//!   intensity (affine adjoint `Y = P Q + H`), plus closed-form impact oracles.
//! * [`factor`]: finite differences for the HJB system driven by a
//!   one-dimensional Markov factor, cross-checked by a Feynman–Kac fixed point.
//! * [`fbsde`]: the decoupling field `Y_t = u(t, Q_t)` for general intensities.
//!
//! [`lattice`] compares the macroscopic model with the classical
//! Avellaneda–Stoikov lattice, and [`execution`] evaluates simple liquidation
//! schedules against a market maker that reacts to them.

// Validation uses `!(x > y)` so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod execution;
pub mod factor;
pub mod fbsde;
pub mod flow;
pub mod grid;
pub mod intensity;
pub mod io;
pub mod lattice;
pub mod ode;
pub mod riccati;
pub mod rng;

pub use error::{Error, Result};
pub use fbsde::{DecouplingField, GridSpec, QGrid};
pub use flow::{FlowPath, OuFactor, PenaltyPath};
pub use grid::TimeGrid;
pub use intensity::{IntensityModel, IntensityPair, Truncation};
pub use riccati::{AffineField, RiccatiSolution, Trajectory};
