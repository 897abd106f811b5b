//! Pathwise simulation and verification of stochastic convective
//! Brinkman-Forchheimer flow on the periodic square, driven by
//! Wong-Zakai approximations of a scalar Wiener path.
//!
//! The modules build on one another: [`noise`] owns the sampled path and
//! its colored and Ornstein-Uhlenbeck functionals, [`spectral`] the
//! Fourier-Galerkin field type and operators, [`diffusion`] the noise
//! coefficients, [`dynamics`] the integrator, [`transforms`] the
//! random-coefficient systems, and [`attractor`] the pullback tools.
//! [`experiments`] wires them into the named runs of the `cbf-lab` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod noise;
pub mod spectral;
pub mod diffusion;
pub mod dynamics;
pub mod transforms;
pub mod attractor;
pub mod io;
pub mod experiments;

pub use error::{Error, Result};
