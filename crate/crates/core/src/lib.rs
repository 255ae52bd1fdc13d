//! Solver and verification kernels for discounted infinite-horizon mean field
//! games with linear dynamics and quadratic costs.
//!
//! The crate is `no_std` (it needs `alloc`) and purely computational. File
//! formats, configuration and the command-line driver live in the `dmfg`
//! companion crate.
//!
//! Layout:
//!
//! - [`model`]: the coefficient tuple, Hamiltonians and the explicit control
//!   minimizer.
//! - [`admissibility`]: structural solvability conditions and a sampled check
//!   of the FBSDE monotonicity inequality.
//! - [`master`]: the quadratic ansatz for the elliptic master equation, its
//!   algebraic root system, root selection and PDE residuals.
//! - [`riccati`]: finite-horizon Riccati oracle for the decoupling
//!   coefficients.
//! - [`sim`]: seeded Euler–Maruyama particle and representative-player
//!   simulation, discounted cost estimation and empirical W2.
//! - [`fixed_point`]: damped Picard iteration on the mean flow with a
//!   finite-difference decoupling field.
//! - [`verify`]: the claim-checking harness (Nash optimality, flow
//!   consistency, representation, weak uniqueness, Lipschitz scans).
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod admissibility;
pub mod error;
pub mod fixed_point;
pub mod grid;
pub mod master;
pub mod math;
pub mod model;
pub mod riccati;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{SpaceGrid, TimeGrid};
pub use master::QuadraticValue;
pub use model::LQModel;
