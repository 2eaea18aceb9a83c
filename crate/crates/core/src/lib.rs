//! Simulation and analysis toolkit for a counterpropagating type-II SPDC
//! photon-pair source emitting a hybrid polarization-frequency entangled state.
//!
//! The crate is organized bottom-up:
//!
//! - [`dispersion`]: modal indices of the H and V waveguide modes.
//! - [`phasematch`]: central frequencies vs. pump angle, beat frequency `μ`
//!   and intra-mode spectral width `Δω₋`.
//! - [`spectrum`]: joint spectral amplitudes on a frequency grid, marginals
//!   and the population balance `p`.
//! - [`hom`]: Hong-Ou-Mandel coincidence probability by quadrature and in
//!   closed form, plus the drift-corrected fit model.
//! - [`cavity`]: Fabry-Pérot facet effects on the interferogram and the
//!   resulting effective visibility.
//! - [`fitting`]: damped least-squares fitting of interferograms.
//! - [`tomography`]: the restricted 4×4 density matrix and its metrics.
//!
//! All internal computation is in SI units (rad/s, s, m).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cavity;
pub mod dispersion;
pub mod error;
pub mod fitting;
pub mod hom;
pub mod phasematch;
pub mod spectrum;
pub mod tomography;

pub use error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Angular frequency (rad/s) of light with vacuum wavelength `lambda` (m).
pub fn wavelength_to_omega(lambda: f64) -> f64 {
    std::f64::consts::TAU * SPEED_OF_LIGHT / lambda
}

/// Vacuum wavelength (m) of light with angular frequency `omega` (rad/s).
pub fn omega_to_wavelength(omega: f64) -> f64 {
    std::f64::consts::TAU * SPEED_OF_LIGHT / omega
}
