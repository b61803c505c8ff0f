//! Recurrence classification and limit-theorem verification for
//! non-homogeneous random walks.
//!
//! * [`model`] — half-strip Markov chains, exact one-step moments, drift
//!   profile extraction and Lyapunov diagnostics.
//! * [`classifier`] — stationary distribution, shift system, `U`/`V`
//!   statistics, verdicts and passage-time moment thresholds.
//! * [`mc`] — seeded ensemble simulation, passage times and tail indices.
//! * [`com`] — lattice random walks and their centre of mass: local limit
//!   checks, escape exponents, 1-d recurrence probes, stable densities.
//! * [`lattice`] — minimal lattice data `(H, b, h)` and characteristic
//!   function checks.
//! * [`scenario`] — JSON scenarios, runs and reproducible artifacts.

pub mod classifier;
pub mod com;
pub mod error;
pub mod lattice;
pub mod mc;
pub mod model;
mod quad;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
