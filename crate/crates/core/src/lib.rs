//! Numerical laboratory for the emergence of classical center-of-mass motion
//! in a many-atom body.
//!
//! The crate is organised bottom-up:
//!
//! * [`coords`] – exact center-of-mass / relative coordinate transforms,
//!   the tridiagonal `K` matrix, its inverse Gram matrix and the inertia tensor.
//! * [`potentials`] – external and pair potentials with analytic derivatives,
//!   the effective expanded potential and the effective center-of-mass force.
//! * [`mdsim`] – velocity-Verlet molecular dynamics of the full chain and the
//!   center-of-mass energy dissipation diagnostic.
//! * [`ensemble`] – ensembles over initial conditions, cumulant estimators,
//!   block decomposition, independence and fluctuation-scaling analysis.
//! * [`qsim`] – split-operator propagation of two particles on a
//!   (center-of-mass, relative) grid, reduced density matrices and purity.

pub mod coords;
pub mod ensemble;
pub mod error;
pub mod mdsim;
pub mod potentials;
pub mod qsim;
pub mod stats;

pub use error::{Error, Result};
