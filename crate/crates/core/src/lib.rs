//! Numerical toolkit for measuring the adiabatic condition of Kerr parametric
//! oscillator (KPO) annealing by Rabi spectroscopy.
//!
//! Layout:
//! - [`fock`]: truncated multi-mode Fock spaces, operators and states.
//! - [`model`]: KPO network Hamiltonians, annealing schedule, drive and decay.
//! - [`dynamics`]: fixed-step RK4 propagation of states and density matrices.
//! - [`oracle`]: exact diagonalization and analytic reference curves.
//! - [`spectroscopy`]: the drive-and-measure protocol, power spectra and estimation.

pub mod dynamics;
pub mod error;
pub mod fock;
pub mod model;
pub mod oracle;
pub mod spectroscopy;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = nalgebra::Complex<f64>;
