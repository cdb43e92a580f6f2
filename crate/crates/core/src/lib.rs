//! Spectral toolkit for an LC oscillator shunted by a two-Cooper-pair tunneling element.
//!
//! Modules, bottom-up:
//!
//! * [`fock`]: truncated Fock-space operators, displacements, coherent states.
//! * [`models`]: the one-mode and three-mode Hamiltonians and the single-arm potential.
//! * [`rwa`]: analytic rotating-wave ladder (interaction energies, shifts and their inversion).
//! * [`reduction`]: Born-Oppenheimer reduction from circuit to effective parameters.
//! * [`spectra`]: eigensolvers, transitions, flux sweeps and basis convergence.
//! * [`dynamics`]: unitary evolution and Wigner functions.
//! * [`fitting`]: spectroscopy datasets and nonlinear least-squares fits.
//!
//! Energies are ordinary frequencies in GHz (E/h) and fluxes are in radians throughout.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod fock;
pub mod models;
pub mod reduction;
pub mod rwa;
pub mod spectra;

pub use error::{Error, Result};
pub use fock::{FockDim, HermitianOperator, QuantumState, C64};
pub use models::{EffectiveParams, PhysicalParams, SingleArmParams};
