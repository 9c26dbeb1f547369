//! Simulation of quantum arrival- and passage-time measurements with a
//! spin-boson detector model.
//!
//! A detector made of metastable spins coupled to a boson bath is described,
//! in its continuum limit, by a complex potential acting on the particle. The
//! undetected ("conditional") part of the wave function evolves under that
//! potential; its norm is the probability that no detection has happened yet,
//! and the first-detection density is the position average of the detector
//! decay rate. Right after a detection the particle is left in the *reset
//! state* `sqrt(A) chi(x) psi_cond`.
//!
//! Modules, bottom-up:
//!
//! - [`grid`], [`wavefunction`]: the spatial grid, wave-function container,
//!   analytic free Gaussian packets and observables.
//! - [`propagator`]: Strang split-operator evolution under the conditional
//!   Hamiltonian, recording survival probability and detection density.
//! - [`detector`]: sensitivity profiles, bath correlation functions and
//!   continuum rates, and the reset operation.
//! - [`discrete_oracle`]: the finite-mode bath computation of the reset
//!   density, used to validate the continuum reset state.
//! - [`passage`]: the two-detector experiment and the classical and Kijowski
//!   reference distributions.
//! - [`precision`]: width budget, optimal detector parameters and the energy
//!   scaling sweep.

pub mod constants;
pub mod detector;
pub mod discrete_oracle;
mod error;
mod fourier;
pub mod grid;
pub mod passage;
pub mod precision;
pub mod propagator;
pub mod quadrature;
pub mod wavefunction;

pub use error::{Error, Result};
pub use num_complex::Complex64;
