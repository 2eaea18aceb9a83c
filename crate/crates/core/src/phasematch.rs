//! Transverse-pump phase matching for the two type-II interactions.
//!
//! With the pump incident at angle `θ`, momentum conservation along the
//! waveguide reads
//!
//! ```text
//! HV:  ω_p sin θ = ω_s n_H(ω_s) − ω_i n_V(ω_i)
//! VH:  ω_p sin θ = ω_s n_V(ω_s) − ω_i n_H(ω_i)
//! ```
//!
//! with `ω_i = ω_p − ω_s`. The signal photon travels along `+z`, the idler
//! along `−z`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::{DispersionModel, Polarization};
use crate::{wavelength_to_omega, Error, Result, SPEED_OF_LIGHT};

/// Pulsed pump beam focused on top of the waveguide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpConfig {
    /// Vacuum wavelength (m).
    pub lambda_p: f64,
    /// Intensity FWHM of the pulse (s).
    pub pulse_fwhm: f64,
    /// Gaussian waist of the spot along the waveguide (m).
    pub waist_wz: f64,
    /// Incidence angle (rad).
    pub theta: f64,
}

impl PumpConfig {
    pub fn new(lambda_p: f64, pulse_fwhm: f64, waist_wz: f64, theta: f64) -> Result<Self> {
        if !(lambda_p > 0.5e-6 && lambda_p < 1.5e-6) {
            return Err(Error::Invariant {
                field: "lambda_p",
                value: lambda_p,
                reason: "pump wavelength must lie in (0.5 µm, 1.5 µm)",
            });
        }
        if !(pulse_fwhm > 0.0 && pulse_fwhm.is_finite()) {
            return Err(Error::Invariant {
                field: "pulse_fwhm",
                value: pulse_fwhm,
                reason: "pulse duration must be positive",
            });
        }
        if !(waist_wz > 0.0 && waist_wz.is_finite()) {
            return Err(Error::Invariant {
                field: "waist_wz",
                value: waist_wz,
                reason: "pump waist must be positive",
            });
        }
        if !(theta.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Invariant {
                field: "theta",
                value: theta,
                reason: "incidence angle must satisfy |θ| < π/2",
            });
        }
        Ok(Self {
            lambda_p,
            pulse_fwhm,
            waist_wz,
            theta,
        })
    }

    /// 773.15 nm, 4.5 ps pulses, 1 mm waist, normal incidence.
    pub fn paper_device() -> Self {
        Self::new(773.15e-9, 4.5e-12, 1e-3, 0.0).expect("preset satisfies the pump invariants")
    }

    pub fn with_theta(self, theta: f64) -> Result<Self> {
        Self::new(self.lambda_p, self.pulse_fwhm, self.waist_wz, theta)
    }

    pub fn omega_p(&self) -> f64 {
        wavelength_to_omega(self.lambda_p)
    }

    /// Period of the pump field, `2π/ω_p` (s).
    pub fn optical_period(&self) -> f64 {
        self.lambda_p / SPEED_OF_LIGHT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Interaction {
    /// H-polarized signal, V-polarized idler.
    HV,
    /// V-polarized signal, H-polarized idler.
    VH,
}

impl Interaction {
    pub fn polarizations(self) -> (Polarization, Polarization) {
        match self {
            Interaction::HV => (Polarization::H, Polarization::V),
            Interaction::VH => (Polarization::V, Polarization::H),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Interaction::HV => "HV",
            Interaction::VH => "VH",
        }
    }
}

impl fmt::Display for Interaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunabilityPoint {
    pub theta: f64,
    pub omega_s_hv: f64,
    pub omega_i_hv: f64,
    pub omega_s_vh: f64,
    pub omega_i_vh: f64,
}

/// Relative tolerance on the signal frequency.
pub const ROOT_RTOL: f64 = 1e-12;

/// Momentum mismatch `ω_s n_a(ω_s) − ω_i n_b(ω_i) − ω_p sin θ` (rad/s).
pub fn momentum_mismatch(
    interaction: Interaction,
    omega_s: f64,
    pump: &PumpConfig,
    model: &DispersionModel,
) -> f64 {
    let (ps, pi) = interaction.polarizations();
    let omega_p = pump.omega_p();
    let omega_i = omega_p - omega_s;
    omega_s * model.index_unchecked(ps, omega_s) - omega_i * model.index_unchecked(pi, omega_i)
        - omega_p * pump.theta.sin()
}

pub(crate) struct NoSignChange {
    pub lo: f64,
    pub hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

/// Bracketed root of a continuous function: bisection, refined by secant
/// steps whenever the secant point stays inside the bracket and the bracket
/// keeps shrinking at least as fast as bisection would.
pub(crate) fn bracketed_root<F>(f: F, lo: f64, hi: f64, rtol: f64) -> Result<f64, NoSignChange>
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(NoSignChange {
            lo,
            hi,
            f_lo: fa,
            f_hi: fb,
        });
    }
    let mut prev_width = b - a;
    for _ in 0..200 {
        let width = b - a;
        let mid = 0.5 * (a + b);
        if width <= rtol * mid.abs().max(f64::MIN_POSITIVE) {
            return Ok(mid);
        }
        let secant = b - fb * (b - a) / (fb - fa);
        let x = if secant > a && secant < b && width <= 0.5 * prev_width {
            secant
        } else {
            mid
        };
        prev_width = width;
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        // A secant step that lands next to one endpoint barely shrinks the
        // bracket; follow it with a bisection of what is left.
        if x != mid && (b - a) > 0.5 * width {
            let m = 0.5 * (a + b);
            let fm = f(m);
            if fm == 0.0 {
                return Ok(m);
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
            }
        }
    }
    Ok(0.5 * (a + b))
}

fn solve_interaction(
    interaction: Interaction,
    pump: &PumpConfig,
    model: &DispersionModel,
) -> Result<f64> {
    let half = 0.5 * pump.omega_p();
    let (lo, hi) = (0.6 * half, 1.4 * half);
    bracketed_root(
        |w| momentum_mismatch(interaction, w, pump, model),
        lo,
        hi,
        ROOT_RTOL,
    )
    .map_err(|e| Error::NoPhaseMatching {
        interaction: interaction.name(),
        omega_lo: e.lo,
        omega_hi: e.hi,
        mismatch_lo: e.f_lo,
        mismatch_hi: e.f_hi,
    })
}

/// Signal and idler central frequencies of both interactions at the pump's
/// incidence angle.
pub fn solve_central_frequencies(
    pump: &PumpConfig,
    model: &DispersionModel,
) -> Result<TunabilityPoint> {
    let omega_p = pump.omega_p();
    let omega_s_hv = solve_interaction(Interaction::HV, pump, model)?;
    let omega_s_vh = solve_interaction(Interaction::VH, pump, model)?;
    Ok(TunabilityPoint {
        theta: pump.theta,
        omega_s_hv,
        omega_i_hv: omega_p - omega_s_hv,
        omega_s_vh,
        omega_i_vh: omega_p - omega_s_vh,
    })
}

/// Tunability curve over a set of incidence angles (rad).
pub fn tunability_curve(
    pump: &PumpConfig,
    model: &DispersionModel,
    thetas: &[f64],
) -> Result<Vec<TunabilityPoint>> {
    thetas
        .par_iter()
        .map(|&theta| solve_central_frequencies(&pump.with_theta(theta)?, model))
        .collect()
}

/// Spectral separation `μ = v_g ω_p Δn / 2c` of the two interactions
/// (rad/s); positive when `n_H > n_V`.
pub fn spectral_separation_mu(pump: &PumpConfig, model: &DispersionModel) -> f64 {
    model.group_velocity() * pump.omega_p() * model.birefringence() / (2.0 * SPEED_OF_LIGHT)
}

/// Spectral width of each interaction, `Δω₋ = √2 v_g / w_z` (rad/s).
pub fn intra_mode_width(pump: &PumpConfig, model: &DispersionModel) -> f64 {
    std::f64::consts::SQRT_2 * model.group_velocity() / pump.waist_wz
}

/// Width of the Gaussian HOM envelope, `Δτ = √2 / Δω₋ = w_z / v_g` (s).
pub fn envelope_width(pump: &PumpConfig, model: &DispersionModel) -> f64 {
    std::f64::consts::SQRT_2 / intra_mode_width(pump, model)
}
