//! Hong-Ou-Mandel coincidence probability vs. signal/idler delay `τ`.
//!
//! Three routes to the same physics:
//!
//! - [`coincidence_quadrature`]: 2D trapezoidal quadrature of the JSA overlap
//!   `P_c = 1/2 − Re ∬ φ_HV(ω,ω′) φ_VH*(ω′,ω) e^{−i(ω−ω′)τ}`.
//! - [`coincidence_closed_form`]: the Gaussian result
//!   `1/2 − 1/2·exp(−τ²/2Δτ²)·cos(μτ)`.
//! - [`fit_model`]: the closed form with visibility and linear drift.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::phasematch::Interaction;
use crate::spectrum::JointSpectrum;
use crate::{Error, Result};

/// Largest phase advance of `e^{−i(ω−ω′)τ}` per grid cell.
pub const MAX_PHASE_PER_CELL: f64 = std::f64::consts::FRAC_PI_4;

/// Tolerance on probabilities outside `[0, 1]`.
pub const PROBABILITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Probability,
    Counts,
}

/// Sampled coincidence probability (or raw counts) vs. delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interferogram {
    /// Delays (s), strictly increasing.
    pub delays: Vec<f64>,
    pub values: Vec<f64>,
    /// One-sigma uncertainties, same length as `values`.
    pub errors: Option<Vec<f64>>,
    pub kind: ValueKind,
}

impl Interferogram {
    pub fn new(
        delays: Vec<f64>,
        values: Vec<f64>,
        errors: Option<Vec<f64>>,
        kind: ValueKind,
    ) -> Result<Self> {
        if delays.len() != values.len() {
            return Err(Error::Domain(format!(
                "{} delays but {} values",
                delays.len(),
                values.len()
            )));
        }
        if let Some(e) = &errors {
            if e.len() != values.len() {
                return Err(Error::Domain(format!(
                    "{} errors for {} values",
                    e.len(),
                    values.len()
                )));
            }
            if e.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(Error::Domain("uncertainties must be positive".into()));
            }
        }
        if delays.iter().any(|t| !t.is_finite()) || !delays.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Domain("delays must be finite and strictly increasing".into()));
        }
        let floor = match kind {
            ValueKind::Probability => -PROBABILITY_SLACK,
            ValueKind::Counts => 0.0,
        };
        if values.iter().any(|v| !(v.is_finite() && *v >= floor)) {
            return Err(Error::Domain("values must be finite and non-negative".into()));
        }
        if kind == ValueKind::Probability {
            if let Some(v) = values.iter().find(|v| **v > 1.0 + PROBABILITY_SLACK) {
                return Err(Error::Domain(format!("probability {v} exceeds 1")));
            }
        }
        Ok(Self {
            delays,
            values,
            errors,
            kind,
        })
    }

    pub fn probability(delays: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(delays, values, None, ValueKind::Probability)
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }
}

/// Parameters of the drift-corrected interferogram model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomFitParams {
    /// Visibility `V ∈ [0, 1]`.
    pub visibility: f64,
    /// Envelope width `Δτ` (s).
    pub delta_tau: f64,
    /// Beat angular frequency `μ` (rad/s).
    pub mu: f64,
    /// Linear drift slope (1/s).
    pub a: f64,
    /// Offset.
    pub b: f64,
}

impl HomFitParams {
    pub fn new(visibility: f64, delta_tau: f64, mu: f64, a: f64, b: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&visibility) {
            return Err(Error::Invariant {
                field: "V",
                value: visibility,
                reason: "visibility must lie in [0, 1]",
            });
        }
        if !(delta_tau > 0.0 && delta_tau.is_finite()) {
            return Err(Error::Invariant {
                field: "delta_tau",
                value: delta_tau,
                reason: "envelope width must be positive",
            });
        }
        Ok(Self {
            visibility,
            delta_tau,
            mu,
            a,
            b,
        })
    }

    /// Beat period `2π/μ` (s).
    pub fn period(&self) -> f64 {
        std::f64::consts::TAU / self.mu
    }
}

pub fn coincidence_closed_form(tau: f64, mu: f64, delta_tau: f64) -> Result<f64> {
    if !(delta_tau > 0.0) {
        return Err(Error::Domain(format!("envelope width {delta_tau} must be positive")));
    }
    Ok(0.5 - 0.5 * (-tau * tau / (2.0 * delta_tau * delta_tau)).exp() * (mu * tau).cos())
}

pub fn fit_model(tau: f64, params: &HomFitParams) -> f64 {
    let dt = params.delta_tau;
    let envelope = (-tau * tau / (2.0 * dt * dt)).exp();
    0.5 * (1.0 - params.visibility * envelope * (params.mu * tau).cos()) + params.a * tau + params.b
}

/// Precomputed overlap kernel `w_i w_j φ_HV(ω_i, ω_j) φ_VH*(ω_j, ω_i)` for
/// repeated evaluation of the HOM quadrature at many delays.
#[derive(Debug, Clone)]
pub struct HomQuadrature {
    kernel: DMatrix<Complex64>,
    detunings: Vec<f64>,
    spacing: f64,
}

impl HomQuadrature {
    pub fn new(js: &JointSpectrum) -> Self {
        let n = js.len();
        let w = js.weights();
        let hv = js.amplitude(Interaction::HV);
        let vh = js.amplitude(Interaction::VH);
        let kernel = DMatrix::from_fn(n, n, |i, j| hv[(i, j)] * vh[(j, i)].conj() * (w[i] * w[j]));
        Self {
            kernel,
            detunings: js.detunings(),
            spacing: js.spacing(),
        }
    }

    pub fn check_resolution(&self, tau: f64) -> Result<()> {
        let phase = self.spacing * tau.abs();
        if phase > MAX_PHASE_PER_CELL {
            return Err(Error::Resolution(format!(
                "delay {tau:.3e} s advances the overlap phase by {phase:.3} rad per grid cell \
                 (limit π/4); use a finer grid (spacing ≤ {:.3e} rad/s)",
                MAX_PHASE_PER_CELL / tau.abs()
            )));
        }
        Ok(())
    }

    /// `P_c(τ)`; the value is not clamped to [0, 1].
    pub fn coincidence(&self, tau: f64) -> Result<f64> {
        self.check_resolution(tau)?;
        // e^{−i(ω_i−ω_j)τ} = e^{−iu_iτ} e^{+iu_jτ} with u the detuning from ω_p/2
        let left: Vec<Complex64> =
            self.detunings.iter().map(|u| Complex64::from_polar(1.0, -u * tau)).collect();
        let mut overlap = Complex64::new(0.0, 0.0);
        for (j, col) in self.kernel.column_iter().enumerate() {
            let inner: Complex64 = col.iter().zip(&left).map(|(k, l)| k * l).sum();
            overlap += inner * Complex64::from_polar(1.0, self.detunings[j] * tau);
        }
        let p = 0.5 - overlap.re;
        if !(-1e-6..=1.0 + 1e-6).contains(&p) {
            log::warn!("quadrature coincidence {p} at τ = {tau:e} s lies outside [0, 1]");
        }
        Ok(p)
    }

    pub fn interferogram(&self, delays: &[f64]) -> Result<Vec<f64>> {
        delays.par_iter().map(|&t| self.coincidence(t)).collect()
    }
}

/// HOM coincidence probability by 2D quadrature of the JSA overlap.
pub fn coincidence_quadrature(js: &JointSpectrum, tau: f64) -> Result<f64> {
    HomQuadrature::new(js).coincidence(tau)
}

pub fn closed_form_interferogram(delays: &[f64], mu: f64, delta_tau: f64) -> Result<Vec<f64>> {
    delays.iter().map(|&t| coincidence_closed_form(t, mu, delta_tau)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::DispersionModel;
    use crate::phasematch::{envelope_width, spectral_separation_mu, PumpConfig};
    use crate::spectrum::{build_joint_spectrum, GridSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const PS: f64 = 1e-12;

    fn preset_quadrature(points: usize) -> (HomQuadrature, f64, f64) {
        let pump = PumpConfig::paper_device();
        let model = DispersionModel::paper_device();
        let js = build_joint_spectrum(&pump, &model, &GridSpec { points, n_sigma: 5.0 }).unwrap();
        (
            HomQuadrature::new(&js),
            spectral_separation_mu(&pump, &model),
            envelope_width(&pump, &model),
        )
    }

    #[test]
    fn closed_form_landmarks() {
        assert_eq!(coincidence_closed_form(0.0, 4.6e12, 10.5 * PS).unwrap(), 0.0);
        // μτ = π well inside the envelope: close to the maximum of 1
        let mu = std::f64::consts::TAU / (1.3 * PS);
        let p = coincidence_closed_form(std::f64::consts::PI / mu, mu, 10.5 * PS).unwrap();
        assert!(p > 0.99 && p < 1.0, "{p}");
        assert!(coincidence_closed_form(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn first_beat_maximum_near_half_period() {
        // Analytic extremum of the Gaussian-enveloped beat: d/dτ vanishes where
        // μ tan(μτ) = −τ/Δτ², i.e. just below τ = π/μ.
        let (dt, mu) = (10.5 * PS, std::f64::consts::TAU / (1.3 * PS));
        let f = |t: f64| coincidence_closed_form(t, mu, dt).unwrap();
        let n = 20_000;
        let (t_max, _) = (0..=n)
            .map(|k| k as f64 * 1.3 * PS / n as f64)
            .map(|t| (t, f(t)))
            .fold((0.0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert!((t_max - 0.65 * PS).abs() < 0.005 * PS, "{t_max}");
    }

    #[test]
    fn fit_model_limits() {
        let mu = std::f64::consts::TAU / (1.8 * PS);
        let ideal = HomFitParams::new(1.0, 10.0 * PS, mu, 0.0, 0.0).unwrap();
        for t in [-20.0 * PS, -0.3 * PS, 0.0, 4.0 * PS] {
            assert_relative_eq!(
                fit_model(t, &ideal),
                coincidence_closed_form(t, mu, 10.0 * PS).unwrap(),
                max_relative = 1e-15,
                epsilon = 1e-16
            );
        }
        let measured = HomFitParams::new(0.701, 10.0 * PS, mu, 0.0, 0.0).unwrap();
        assert_relative_eq!(fit_model(0.0, &measured), 0.1495, max_relative = 1e-12);
        assert_relative_eq!(fit_model(1e-9, &measured), 0.5, max_relative = 1e-12);
        assert_relative_eq!(fit_model(-1e-9, &measured), 0.5, max_relative = 1e-12);
        assert!(HomFitParams::new(1.2, 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(HomFitParams::new(0.5, 0.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn quadrature_dip_and_distinguishable_limit() {
        let (q, _, dt) = preset_quadrature(1024);
        assert!(q.coincidence(0.0).unwrap().abs() < 1e-6);
        assert!((q.coincidence(6.0 * dt).unwrap() - 0.5).abs() < 1e-6);
        assert!((q.coincidence(-6.0 * dt).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let (q, mu, dt) = preset_quadrature(512);
        let delays: Vec<f64> = (-30..=30).map(|k| k as f64 * PS).collect();
        let quad = q.interferogram(&delays).unwrap();
        let closed = closed_form_interferogram(&delays, mu, dt).unwrap();
        let worst = quad.iter().zip(&closed).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "max deviation {worst:e}");
    }

    #[test]
    fn quadrature_rejects_underresolved_delay() {
        let (q, _, _) = preset_quadrature(256);
        assert!(matches!(q.coincidence(100.0 * PS), Err(Error::Resolution(_))));
    }

    #[test]
    fn interferogram_invariants() {
        let ok = Interferogram::probability(vec![0.0, 1.0], vec![0.2, 0.5]);
        assert!(ok.is_ok());
        assert!(Interferogram::probability(vec![1.0, 0.0], vec![0.2, 0.5]).is_err());
        assert!(Interferogram::probability(vec![0.0, 1.0], vec![-0.1, 0.5]).is_err());
        assert!(Interferogram::probability(vec![0.0, 1.0], vec![0.2, 1.5]).is_err());
        assert!(Interferogram::probability(vec![0.0, 1.0], vec![-1e-14, 0.5]).is_ok());
        assert!(Interferogram::new(vec![0.0, 1.0], vec![-1e-14, 5.0], None, ValueKind::Counts).is_err());
        assert!(Interferogram::new(vec![0.0, 1.0], vec![20.0, 50.0], None, ValueKind::Counts).is_ok());
        assert!(Interferogram::new(vec![0.0], vec![1.0], Some(vec![0.0]), ValueKind::Counts).is_err());
    }

    proptest! {
        #[test]
        fn closed_form_even_and_bounded(
            tau in -50e-12f64..50e-12,
            mu in 0.0f64..1e13,
            dt in 1e-12f64..20e-12,
        ) {
            let p = coincidence_closed_form(tau, mu, dt).unwrap();
            prop_assert_eq!(p, coincidence_closed_form(-tau, mu, dt).unwrap());
            prop_assert!((0.0..=1.0).contains(&p));
            let dip = coincidence_closed_form(tau, 0.0, dt).unwrap();
            prop_assert!(dip <= 0.5);
        }

        #[test]
        fn fit_model_envelope_bound(
            tau in -50e-12f64..50e-12,
            v in 0.0f64..=1.0,
            dt in 1e-12f64..20e-12,
            mu in 0.0f64..1e13,
            a in -1e9f64..1e9,
            b in -0.1f64..0.1,
        ) {
            let p = HomFitParams::new(v, dt, mu, a, b).unwrap();
            let dev = (fit_model(tau, &p) - 0.5 - a * tau - b).abs();
            let bound = 0.5 * v * (-tau * tau / (2.0 * dt * dt)).exp();
            prop_assert!(dev <= bound * (1.0 + 1e-12) + 1e-15);
        }
    }
}
