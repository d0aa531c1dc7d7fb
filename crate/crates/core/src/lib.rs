//! Finite-particle weak KAM laboratory.
//!
//! Systems of `N` indistinguishable particles on the torus `T^d` are handled
//! through `N`-sample configurations with the empirical inner product. The
//! crate computes discounted value functions, the effective Hamiltonian
//! `H(c)`, weak KAM solutions as Lax-Oleinik fixed points, calibrated curves
//! along Hamiltonian characteristics, and invariant minimizing measures as
//! Birkhoff time averages.

pub mod assignment;
pub mod audit;
pub mod calibration;
pub mod cell;
pub mod cli;
pub mod config;
pub mod config_space;
pub mod discounted;
pub mod error;
pub mod flow;
pub mod io;
pub mod measures;
pub mod model;
pub mod oracle;
pub mod potential;

pub use config_space::{dist_weak, is_equivalent, wrap, Configuration, IntegerShift, Momentum, ParticleArray, Permutation, Velocity};
pub use error::{Error, Result};
pub use flow::{PhasePoint, Scheme, Trajectory};
pub use model::TonelliModel;
pub use potential::{Mode, TrigPotential};
