//! Cahn–Hilliard–Brinkman and Hele-Shaw phase-field solver on a uniform MAC grid.
//!
//! The crate is layered bottom-up:
//!
//! * [`grid`] — grid, cell/face fields, discrete operators and norms
//! * [`spectral`] — exact transform solvers for `a + bΔ_h + cΔ_h²`
//! * [`potential`] — polynomial double-well potentials
//! * [`flow`] — Brinkman and Darcy velocity solves
//! * [`chb`] — the coupled energy-stable time stepper and diagnostics
//! * [`equilibrium`] — stationary states and decay-rate fits
//! * [`experiments`] — continuous dependence, viscosity sweeps, absorbing-ball probe
//! * [`config`], [`initial`], [`snapshot`], [`output`] — I/O plumbing
//! * [`validate`] — the invariant suite behind `chb validate`

pub mod config;
pub mod error;
pub mod flow;
pub mod grid;
pub mod potential;
pub mod spectral;
pub mod chb;
pub mod manufactured;
pub mod equilibrium;
pub mod experiments;
pub mod initial;
pub mod output;
pub mod snapshot;
pub mod validate;

pub use error::{ChbError, Result};
