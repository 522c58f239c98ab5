//! Galerkin simulator for the viscous fractional Cahn–Hilliard equation with
//! memory on a bounded interval.
//!
//! The order parameter `u` vanishes outside the interval and is discretized
//! with P1 elements on the interior nodes; the chemical potential carries a
//! homogeneous Neumann condition. The memory term is written in past-history
//! form and stored either on an `s`-grid or as exponential moments.

pub mod config;
pub mod diagnostics;
pub mod eigen;
pub mod error;
pub mod fractional;
pub mod history;
pub mod memory;
pub mod mesh;
pub mod neumann;
pub mod output;
pub mod potential;
pub mod solver;
pub mod suite;

pub use error::{Error, Result};
