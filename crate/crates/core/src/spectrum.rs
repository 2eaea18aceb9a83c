//! Joint spectral amplitudes of the two interactions.
//!
//! Each JSA factorizes in the sum and difference frequencies
//! `ω₊ = ω + ω′`, `ω₋ = ω − ω′`:
//!
//! ```text
//! φ_α(ω, ω′) = φ_spec(ω₊) · φ_pm,α(ω₋)
//! φ_spec(ω₊)    = exp(−(ω₊ − ω_p)² / 4σ₊²)
//! φ_pm,HV(ω₋)   = √π w_z exp(−(ω₋ − μ)² / 2Δω₋²)
//! φ_pm,VH(ω₋)   = √π w_z exp(−(ω₋ + μ)² / 2Δω₋²)
//! ```
//!
//! The grid uses one shared frequency axis for signal and idler, symmetric
//! about `ω_p/2`, so `φ_VH(ω′, ω)` is the transpose of a stored grid.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::DispersionModel;
use crate::phasematch::{intra_mode_width, spectral_separation_mu, Interaction, PumpConfig};
use crate::{Error, Result};

/// Minimum number of points per grid axis.
pub const MIN_GRID_POINTS: usize = 64;
/// Minimum half-extent of the grid in amplitude standard deviations.
pub const MIN_GRID_SIGMAS: f64 = 5.0;
/// Largest tolerated discretization error of the joint norm.
pub const NORM_DISCRETIZATION_TOL: f64 = 1e-6;

/// Resolution and extent of the frequency grid.
///
/// The half-extent covers `n_sigma` amplitude standard deviations of both
/// `φ_spec` (`√2 σ₊`) and `φ_pm` (`Δω₋`) around each interaction's peak, in
/// the rotated `(ω₊, ω₋)` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: usize,
    pub n_sigma: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 512,
            n_sigma: MIN_GRID_SIGMAS,
        }
    }
}

/// RMS bandwidth `σ₊ = 2√(ln 2) / FWHM` of the transform-limited pump
/// spectrum (rad/s).
pub fn pump_bandwidth(pump: &PumpConfig) -> f64 {
    2.0 * std::f64::consts::LN_2.sqrt() / pump.pulse_fwhm
}

pub fn pump_spectral_amplitude(omega_plus: f64, pump: &PumpConfig) -> Complex64 {
    let s = pump_bandwidth(pump);
    let x = omega_plus - pump.omega_p();
    Complex64::new((-x * x / (4.0 * s * s)).exp(), 0.0)
}

pub fn phase_matching_amplitude(
    interaction: Interaction,
    omega_minus: f64,
    pump: &PumpConfig,
    model: &DispersionModel,
) -> Complex64 {
    Complex64::new(JsaShape::new(pump, model).phase_matching(interaction, omega_minus), 0.0)
}

/// Analytic parameters of the Gaussian JSAs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JsaShape {
    pub omega_p: f64,
    pub sigma_plus: f64,
    pub mu: f64,
    pub delta_omega_minus: f64,
    pub waist_wz: f64,
}

impl JsaShape {
    pub fn new(pump: &PumpConfig, model: &DispersionModel) -> Self {
        Self {
            omega_p: pump.omega_p(),
            sigma_plus: pump_bandwidth(pump),
            mu: spectral_separation_mu(pump, model),
            delta_omega_minus: intra_mode_width(pump, model),
            waist_wz: pump.waist_wz,
        }
    }

    pub fn spectral(&self, omega_plus: f64) -> f64 {
        let x = omega_plus - self.omega_p;
        (-x * x / (4.0 * self.sigma_plus * self.sigma_plus)).exp()
    }

    pub fn phase_matching(&self, interaction: Interaction, omega_minus: f64) -> f64 {
        let x = match interaction {
            Interaction::HV => omega_minus - self.mu,
            Interaction::VH => omega_minus + self.mu,
        };
        let dw = self.delta_omega_minus;
        std::f64::consts::PI.sqrt() * self.waist_wz * (-x * x / (2.0 * dw * dw)).exp()
    }

    /// Unnormalized `φ_α(ω, ω′)`.
    pub fn amplitude(&self, interaction: Interaction, omega_s: f64, omega_i: f64) -> f64 {
        self.spectral(omega_s + omega_i) * self.phase_matching(interaction, omega_s - omega_i)
    }

    /// Grid half-extent around `ω_p/2` covering `n_sigma` amplitude standard
    /// deviations in both rotated directions.
    pub fn half_extent(&self, n_sigma: f64) -> f64 {
        0.5 * (n_sigma * (std::f64::consts::SQRT_2 * self.sigma_plus + self.delta_omega_minus)
            + self.mu.abs())
    }
}

/// Trapezoid weights (including the spacing) for a uniform axis.
pub(crate) fn uniform_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n > 0 {
        w[0] *= 0.5;
        w[n - 1] *= 0.5;
    }
    w
}

/// Trapezoid weights for a strictly monotone, possibly non-uniform axis.
pub(crate) fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let n = axis.len();
    if n < 2 {
        return vec![1.0; n];
    }
    (0..n)
        .map(|k| {
            let lo = axis[k.saturating_sub(1)];
            let hi = axis[(k + 1).min(n - 1)];
            0.5 * (hi - lo).abs()
        })
        .collect()
}

/// Normalized joint spectral amplitudes of both interactions.
///
/// Element `(i, j)` of either grid is the amplitude at signal frequency
/// `omega_s_axis[i]` and idler frequency `omega_i_axis[j]`.
#[derive(Debug, Clone)]
pub struct JointSpectrum {
    omega_s_axis: Vec<f64>,
    omega_i_axis: Vec<f64>,
    amp_hv: DMatrix<Complex64>,
    amp_vh: DMatrix<Complex64>,
    normalization: f64,
    shape: JsaShape,
    spacing: f64,
    center: f64,
}

fn norm_on_subgrid(hv: &DMatrix<Complex64>, vh: &DMatrix<Complex64>, stride: usize, h: f64) -> f64 {
    let idx: Vec<usize> = (0..hv.nrows()).step_by(stride).collect();
    let w = uniform_weights(idx.len(), h * stride as f64);
    let mut total = 0.0;
    for (b, &j) in idx.iter().enumerate() {
        for (a, &i) in idx.iter().enumerate() {
            total += w[a] * w[b] * (hv[(i, j)].norm_sqr() + vh[(i, j)].norm_sqr());
        }
    }
    total
}

fn fill_grid(shape: &JsaShape, interaction: Interaction, axis: &[f64]) -> DMatrix<Complex64> {
    let n = axis.len();
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    m.as_mut_slice()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(j, col)| {
            let wj = axis[j];
            for (i, v) in col.iter_mut().enumerate() {
                *v = Complex64::new(shape.amplitude(interaction, axis[i], wj), 0.0);
            }
        });
    m
}

/// Build both JSAs on a grid centred at degeneracy and normalize them
/// jointly: `Σ (|φ_HV|² + |φ_VH|²) Δω Δω′ = 1`.
pub fn build_joint_spectrum(
    pump: &PumpConfig,
    model: &DispersionModel,
    grid: &GridSpec,
) -> Result<JointSpectrum> {
    if grid.points < MIN_GRID_POINTS {
        return Err(Error::Resolution(format!(
            "{} points per axis; at least {MIN_GRID_POINTS} are required",
            grid.points
        )));
    }
    if !(grid.n_sigma >= MIN_GRID_SIGMAS) {
        return Err(Error::Resolution(format!(
            "grid covers ±{} standard deviations; at least ±{MIN_GRID_SIGMAS} are required",
            grid.n_sigma
        )));
    }
    let shape = JsaShape::new(pump, model);
    let n = grid.points;
    let center = 0.5 * shape.omega_p;
    let half = shape.half_extent(grid.n_sigma);
    let h = 2.0 * half / (n - 1) as f64;
    let mid = 0.5 * (n - 1) as f64;
    let axis: Vec<f64> = (0..n).map(|k| center + (k as f64 - mid) * h).collect();

    let mut amp_hv = fill_grid(&shape, Interaction::HV, &axis);
    let mut amp_vh = fill_grid(&shape, Interaction::VH, &axis);

    let fine = norm_on_subgrid(&amp_hv, &amp_vh, 1, h);
    let coarse = norm_on_subgrid(&amp_hv, &amp_vh, 2, h);
    if !(fine > 0.0) {
        return Err(Error::DegenerateInput("joint spectrum has zero norm on the grid".into()));
    }
    let err = (coarse / fine - 1.0).abs();
    if err > NORM_DISCRETIZATION_TOL {
        return Err(Error::Resolution(format!(
            "estimated norm discretization error {err:.2e} exceeds {NORM_DISCRETIZATION_TOL:e}; \
             spacing {h:.3e} rad/s is too coarse, increase the number of grid points"
        )));
    }
    let normalization = fine.sqrt().recip();
    amp_hv.scale_mut(normalization);
    amp_vh.scale_mut(normalization);

    Ok(JointSpectrum {
        omega_s_axis: axis.clone(),
        omega_i_axis: axis,
        amp_hv,
        amp_vh,
        normalization,
        shape,
        spacing: h,
        center,
    })
}

impl JointSpectrum {
    pub fn omega_s_axis(&self) -> &[f64] {
        &self.omega_s_axis
    }

    pub fn omega_i_axis(&self) -> &[f64] {
        &self.omega_i_axis
    }

    pub fn len(&self) -> usize {
        self.omega_s_axis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega_s_axis.is_empty()
    }

    /// Uniform grid spacing (rad/s), identical on both axes.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Degeneracy frequency `ω_p/2`, the centre of both axes.
    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn shape(&self) -> &JsaShape {
        &self.shape
    }

    /// Factor applied to the analytic amplitudes to reach unit joint norm.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn amplitude(&self, interaction: Interaction) -> &DMatrix<Complex64> {
        match interaction {
            Interaction::HV => &self.amp_hv,
            Interaction::VH => &self.amp_vh,
        }
    }

    /// Normalized amplitude at an arbitrary frequency pair.
    pub fn amplitude_at(&self, interaction: Interaction, omega_s: f64, omega_i: f64) -> Complex64 {
        Complex64::new(self.normalization * self.shape.amplitude(interaction, omega_s, omega_i), 0.0)
    }

    /// Trapezoid quadrature weights along either axis (spacing included).
    pub fn weights(&self) -> Vec<f64> {
        uniform_weights(self.len(), self.spacing)
    }

    /// Offsets `ω − ω_p/2` of the axis points, computed from the index so
    /// that differences are exact multiples of the spacing.
    pub fn detunings(&self) -> Vec<f64> {
        let mid = 0.5 * (self.len() - 1) as f64;
        (0..self.len()).map(|k| (k as f64 - mid) * self.spacing).collect()
    }

    /// `|φ_HV|² + |φ_VH|²` on the grid.
    pub fn jsi(&self) -> DMatrix<f64> {
        self.amp_hv.zip_map(&self.amp_vh, |a, b| a.norm_sqr() + b.norm_sqr())
    }

    pub fn jsi_grid(&self) -> JsiGrid {
        JsiGrid {
            signal_axis: self.omega_s_axis.clone(),
            idler_axis: self.omega_i_axis.clone(),
            values: self.jsi(),
        }
    }
}

/// Signal and idler marginal spectral densities (per rad/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    pub omega_s: Vec<f64>,
    pub signal: Vec<f64>,
    pub omega_i: Vec<f64>,
    pub idler: Vec<f64>,
}

pub fn marginal_spectra(js: &JointSpectrum) -> Marginals {
    js.jsi_grid().marginals()
}

/// Non-negative joint spectral intensity on arbitrary monotone axes, as
/// produced by simulation or ingested from a measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct JsiGrid {
    pub signal_axis: Vec<f64>,
    pub idler_axis: Vec<f64>,
    /// `values[(i, j)]` at signal `signal_axis[i]`, idler `idler_axis[j]`.
    pub values: DMatrix<f64>,
}

fn strictly_monotone(axis: &[f64]) -> bool {
    axis.windows(2).all(|w| w[1] > w[0]) || axis.windows(2).all(|w| w[1] < w[0])
}

impl JsiGrid {
    pub fn new(signal_axis: Vec<f64>, idler_axis: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        if signal_axis.is_empty() || idler_axis.is_empty() {
            return Err(Error::DegenerateInput("empty JSI grid".into()));
        }
        if values.nrows() != signal_axis.len() || values.ncols() != idler_axis.len() {
            return Err(Error::Domain(format!(
                "JSI grid is {}×{} but axes have {} and {} points",
                values.nrows(),
                values.ncols(),
                signal_axis.len(),
                idler_axis.len()
            )));
        }
        if !strictly_monotone(&signal_axis) || !strictly_monotone(&idler_axis) {
            return Err(Error::Domain("JSI axes must be strictly monotone".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain("JSI values must be finite and non-negative".into()));
        }
        Ok(Self {
            signal_axis,
            idler_axis,
            values,
        })
    }

    /// Integrated weight `∬ JSI`.
    pub fn total(&self) -> f64 {
        let ws = trapezoid_weights(&self.signal_axis);
        let wi = trapezoid_weights(&self.idler_axis);
        self.values
            .row_iter()
            .zip(&ws)
            .map(|(row, a)| a * row.iter().zip(&wi).map(|(v, b)| v * b).sum::<f64>())
            .sum()
    }

    pub fn marginals(&self) -> Marginals {
        let ws = trapezoid_weights(&self.signal_axis);
        let wi = trapezoid_weights(&self.idler_axis);
        let signal = self
            .values
            .row_iter()
            .map(|row| row.iter().zip(&wi).map(|(v, b)| v * b).sum())
            .collect();
        let idler = self
            .values
            .column_iter()
            .map(|col| col.iter().zip(&ws).map(|(v, a)| v * a).sum())
            .collect();
        Marginals {
            omega_s: self.signal_axis.clone(),
            signal,
            omega_i: self.idler_axis.clone(),
            idler,
        }
    }
}

/// Population balance `p`: the fraction of the joint spectral weight whose
/// signal frequency lies above `omega_split` (the `ω₁` peak for `μ > 0`).
/// Points exactly on the split count half to each side.
pub fn extract_population_p(grid: &JsiGrid, omega_split: f64) -> Result<f64> {
    if grid.values.is_empty() {
        return Err(Error::DegenerateInput("empty JSI grid".into()));
    }
    if !omega_split.is_finite() {
        return Err(Error::Domain(format!("split frequency {omega_split} is not finite")));
    }
    let ws = trapezoid_weights(&grid.signal_axis);
    let wi = trapezoid_weights(&grid.idler_axis);
    let mut total = 0.0;
    let mut upper = 0.0;
    for (i, row) in grid.values.row_iter().enumerate() {
        let mass = ws[i] * row.iter().zip(&wi).map(|(v, b)| v * b).sum::<f64>();
        total += mass;
        let w = grid.signal_axis[i];
        if w > omega_split {
            upper += mass;
        } else if w == omega_split {
            upper += 0.5 * mass;
        }
    }
    if !(total > 0.0) {
        return Err(Error::DegenerateInput("JSI grid carries zero total weight".into()));
    }
    Ok(upper / total)
}
