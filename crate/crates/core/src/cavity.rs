//! Fabry-Pérot facet effects on the HOM interferogram.
//!
//! Each facet acts as a frequency-dependent beamsplitter. A photon born at
//! the waveguide centre leaves through the facet it was heading to with
//! amplitude `f_t` or through the opposite one with amplitude `f_r`:
//!
//! ```text
//! f_r(ω) = √(R(1−R)) e^{i3ωnL/2c} / (1 − R e^{i2ωnL/c})
//! f_t(ω) = √(1−R)    e^{iωnL/2c}  / (1 − R e^{i2ωnL/c})
//! ```
//!
//! The pair paths where both photons leave through the same facet interfere
//! with the ordinary ones and add a modulation at the pump frequency on top
//! of the beating. A slow detector only sees its average over one pump
//! period, which lowers the fringe visibility.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fitting::{fit_hom_interferogram, initial_guess, FitOptions, FitParam, FitResult};
use crate::hom::{HomFitParams, Interferogram, ValueKind, MAX_PHASE_PER_CELL};
use crate::phasematch::{Interaction, PumpConfig};
use crate::spectrum::JointSpectrum;
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Minimum number of grid points per free spectral range.
pub const MIN_POINTS_PER_FSR: f64 = 8.0;
/// Raw samples per pump period in averaged scans.
pub const SAMPLES_PER_PERIOD: usize = 16;
/// Minimum samples of the raw scan inside one averaging window.
pub const MIN_SAMPLES_PER_WINDOW: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveguideConfig {
    /// Length `L` (m).
    pub length_l: f64,
    /// Modal intensity reflectivity `R` of each facet.
    pub reflectivity_r: f64,
    /// Modal index `n` used for the cavity phase, shared by H and V.
    pub modal_index_n: f64,
}

impl WaveguideConfig {
    pub fn new(length_l: f64, reflectivity_r: f64, modal_index_n: f64) -> Result<Self> {
        if !(length_l > 0.0 && length_l.is_finite()) {
            return Err(Error::Invariant {
                field: "length_L",
                value: length_l,
                reason: "waveguide length must be positive",
            });
        }
        if !(0.0..1.0).contains(&reflectivity_r) {
            return Err(Error::Invariant {
                field: "reflectivity_R",
                value: reflectivity_r,
                reason: "facet reflectivity must lie in [0, 1); R = 1 is a closed, singular cavity",
            });
        }
        if !(modal_index_n > 1.0 && modal_index_n.is_finite()) {
            return Err(Error::Invariant {
                field: "modal_index_n",
                value: modal_index_n,
                reason: "modal index must exceed 1",
            });
        }
        Ok(Self {
            length_l,
            reflectivity_r,
            modal_index_n,
        })
    }

    /// 2.6 mm ridge with uncoated facets (`R ≈ 0.10`); `n` is the mean of
    /// the H and V modal indices.
    pub fn paper_device() -> Self {
        Self::new(2.6e-3, 0.10, 3.156).expect("preset satisfies the invariants")
    }

    pub fn with_reflectivity(self, reflectivity_r: f64) -> Result<Self> {
        Self::new(self.length_l, reflectivity_r, self.modal_index_n)
    }

    /// Free spectral range `πc/(nL)` (rad/s): the round-trip phase `2ωnL/c`
    /// advances by 2π across it.
    pub fn free_spectral_range(&self) -> f64 {
        std::f64::consts::PI * SPEED_OF_LIGHT / (self.modal_index_n * self.length_l)
    }
}

/// `(f_r, f_t)` at angular frequency `omega`.
pub fn facet_amplitudes(omega: f64, wg: &WaveguideConfig) -> Result<(Complex64, Complex64)> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!("facet amplitudes requested at frequency {omega}")));
    }
    let r = wg.reflectivity_r;
    if r >= 1.0 {
        return Err(Error::SingularCavity);
    }
    let k = omega * wg.modal_index_n * wg.length_l / SPEED_OF_LIGHT;
    let denom = Complex64::new(1.0, 0.0) - Complex64::from_polar(r, 2.0 * k);
    let f_r = Complex64::from_polar((r * (1.0 - r)).sqrt(), 1.5 * k) / denom;
    let f_t = Complex64::from_polar((1.0 - r).sqrt(), 0.5 * k) / denom;
    Ok((f_r, f_t))
}

/// Exponent pair `(α, β)` of `e^{−i(αω₁ + βω₂)τ}` attached to each path.
const PATH_EXPONENTS: [(i32, i32); 4] = [(0, 1), (1, 1), (0, 0), (1, 0)];

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Path coefficients of the `A`/`C` brackets (first) and `B`/`D` brackets
/// (second), in the order of [`PATH_EXPONENTS`]: both reflected, signal
/// transmitted, idler transmitted, both transmitted.
fn path_coefficients(
    fr1: Complex64,
    ft1: Complex64,
    fr2: Complex64,
    ft2: Complex64,
) -> ([Complex64; 4], [Complex64; 4]) {
    let rr = fr1 * fr2;
    let tr = I * ft1 * fr2;
    let rt = I * fr1 * ft2;
    let tt = I * ft1 * ft2;
    ([-rr, tr, rt, tt], [rr, tr, rt, -tt])
}

fn bracket(coeffs: &[Complex64; 4], omega1: f64, omega2: f64, tau: f64) -> Complex64 {
    coeffs
        .iter()
        .zip(PATH_EXPONENTS)
        .map(|(c, (a, b))| c * Complex64::from_polar(1.0, -(a as f64 * omega1 + b as f64 * omega2) * tau))
        .sum()
}

/// Output-port amplitudes `(A, B, C, D)` at `(ω₁, ω₂)` and delay `tau`.
pub fn mixed_coefficients(
    omega1: f64,
    omega2: f64,
    tau: f64,
    js: &JointSpectrum,
    wg: &WaveguideConfig,
) -> Result<(Complex64, Complex64, Complex64, Complex64)> {
    let (fr1, ft1) = facet_amplitudes(omega1, wg)?;
    let (fr2, ft2) = facet_amplitudes(omega2, wg)?;
    let (first, second) = path_coefficients(fr1, ft1, fr2, ft2);
    let hv = js.amplitude_at(Interaction::HV, omega1, omega2);
    let vh = js.amplitude_at(Interaction::VH, omega1, omega2);
    let x = bracket(&first, omega1, omega2, tau);
    let y = bracket(&second, omega1, omega2, tau);
    Ok((hv * x, vh * y, vh * x, hv * y))
}

/// Coincidences between polarizations at the two beamsplitter outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    /// H at output 3, V at output 4.
    HV,
    /// V at output 3, H at output 4.
    VH,
    Total,
}

/// Check that the grid resolves the FSR and the delay phase.
pub fn check_cavity_resolution(js: &JointSpectrum, wg: &WaveguideConfig, tau: f64) -> Result<()> {
    let h = js.spacing();
    if wg.reflectivity_r > 0.0 {
        let fsr = wg.free_spectral_range();
        if h * MIN_POINTS_PER_FSR > fsr {
            return Err(Error::Resolution(format!(
                "grid spacing {h:.3e} rad/s gives {:.1} points per free spectral range \
                 {fsr:.3e} rad/s; at least {MIN_POINTS_PER_FSR} are required",
                fsr / h
            )));
        }
    }
    let phase = h * tau.abs();
    if phase > MAX_PHASE_PER_CELL {
        return Err(Error::Resolution(format!(
            "delay {tau:.3e} s advances the phase by {phase:.3} rad per grid cell (limit π/4)"
        )));
    }
    Ok(())
}

fn grid_facets(js: &JointSpectrum, wg: &WaveguideConfig) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let mut fr = Vec::with_capacity(js.len());
    let mut ft = Vec::with_capacity(js.len());
    for &w in js.omega_s_axis() {
        let (r, t) = facet_amplitudes(w, wg)?;
        fr.push(r);
        ft.push(t);
    }
    Ok((fr, ft))
}

/// Direct evaluation: builds `A..D` on the grid at this delay and sums the
/// coincidence integrands term by term.
pub fn cavity_coincidence_channel(
    tau: f64,
    js: &JointSpectrum,
    wg: &WaveguideConfig,
    channel: Channel,
) -> Result<f64> {
    check_cavity_resolution(js, wg, tau)?;
    let n = js.len();
    let axis = js.omega_s_axis();
    let w = js.weights();
    let (fr, ft) = grid_facets(js, wg)?;
    let hv = js.amplitude(Interaction::HV);
    let vh = js.amplitude(Interaction::VH);
    let mut x = DMatrix::<Complex64>::zeros(n, n);
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let (first, second) = path_coefficients(fr[i], ft[i], fr[j], ft[j]);
            x[(i, j)] = bracket(&first, axis[i], axis[j], tau);
            y[(i, j)] = bracket(&second, axis[i], axis[j], tau);
        }
    }
    // P = ¼ ∬ |F|² + |G|² + F*(3,4) G(4,3) + F(4,3) G*(3,4)
    let channel_sum = |phi_f: &DMatrix<Complex64>, phi_g: &DMatrix<Complex64>| -> f64 {
        let mut total = 0.0;
        for j in 0..n {
            for i in 0..n {
                let f34 = phi_f[(i, j)] * x[(i, j)];
                let g34 = phi_g[(i, j)] * y[(i, j)];
                let f43 = phi_f[(j, i)] * x[(j, i)];
                let g43 = phi_g[(j, i)] * y[(j, i)];
                let v = f34.norm_sqr() + g34.norm_sqr() + (f34.conj() * g43).re + (f43 * g34.conj()).re;
                total += w[i] * w[j] * v;
            }
        }
        0.25 * total
    };
    Ok(match channel {
        Channel::HV => channel_sum(hv, vh),
        Channel::VH => channel_sum(vh, hv),
        Channel::Total => channel_sum(hv, vh) + channel_sum(vh, hv),
    })
}

/// Total coincidence probability `P_HV + P_VH` by direct quadrature.
pub fn cavity_coincidence(tau: f64, js: &JointSpectrum, wg: &WaveguideConfig) -> Result<f64> {
    cavity_coincidence_channel(tau, js, wg, Channel::Total)
}

/// Delay-independent decomposition of the coincidence integrand.
///
/// Writing every frequency as `ω = ω_c + u` with `ω_c = ω_p/2`, each term of
/// the integrand carries `e^{−i(aω₃ + bω₄)τ}` with `a, b ∈ {−1, 0, 1}`. The
/// kernel stores the weighted sum of the prefactors for each `(a, b)`:
/// a scalar for `(0, 0)`, vectors for a single nonzero exponent and full
/// matrices for `(1, 1)` and `(1, −1)`.
#[derive(Debug, Clone)]
pub struct CavityKernel {
    g00: Complex64,
    /// `(1, 0)`, summed over the second variable.
    g_row: Vec<Complex64>,
    /// `(0, 1)`, summed over the first variable.
    g_col: Vec<Complex64>,
    g_pp: DMatrix<Complex64>,
    g_pm: DMatrix<Complex64>,
    detunings: Vec<f64>,
    center: f64,
    spacing: f64,
    fsr: f64,
    reflectivity: f64,
}

impl CavityKernel {
    pub fn new(js: &JointSpectrum, wg: &WaveguideConfig, channel: Channel) -> Result<Self> {
        check_cavity_resolution(js, wg, 0.0)?;
        let n = js.len();
        let w = js.weights();
        let (fr, ft) = grid_facets(js, wg)?;
        let hv = js.amplitude(Interaction::HV);
        let vh = js.amplitude(Interaction::VH);
        let pairs: Vec<(&DMatrix<Complex64>, &DMatrix<Complex64>)> = match channel {
            Channel::HV => vec![(hv, vh)],
            Channel::VH => vec![(vh, hv)],
            Channel::Total => vec![(hv, vh), (vh, hv)],
        };

        // Only the real part of the total is physical, so a term may be
        // replaced by its conjugate; this folds every exponent pair onto
        // (0,0), (1,0), (0,1), (1,1) and (1,−1).
        struct Column {
            g00: Complex64,
            row: Vec<Complex64>,
            col: Complex64,
            pp: Vec<Complex64>,
            pm: Vec<Complex64>,
        }
        let zero = Complex64::new(0.0, 0.0);
        let columns: Vec<Column> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut c = Column {
                    g00: zero,
                    row: vec![zero; n],
                    col: zero,
                    pp: vec![zero; n],
                    pm: vec![zero; n],
                };
                for i in 0..n {
                    let weight = 0.25 * w[i] * w[j];
                    let (x34, y34) = path_coefficients(fr[i], ft[i], fr[j], ft[j]);
                    let (x43, y43) = path_coefficients(fr[j], ft[j], fr[i], ft[i]);
                    for &(phi_f, phi_g) in &pairs {
                        let (f34, g34) = (phi_f[(i, j)], phi_g[(i, j)]);
                        let (f43, g43) = (phi_f[(j, i)], phi_g[(j, i)]);
                        let mut add = |a: i32, b: i32, v: Complex64| {
                            let (a, b, v) = if a < 0 || (a == 0 && b < 0) {
                                (-a, -b, v.conj())
                            } else {
                                (a, b, v)
                            };
                            let v = v * weight;
                            match (a, b) {
                                (0, 0) => c.g00 += v,
                                (1, 0) => c.row[i] += v,
                                (0, 1) => c.col += v,
                                (1, 1) => c.pp[i] += v,
                                _ => c.pm[i] += v,
                            }
                        };
                        for (m, &(am, bm)) in PATH_EXPONENTS.iter().enumerate() {
                            for (k, &(ak, bk)) in PATH_EXPONENTS.iter().enumerate() {
                                // |F|² and |G|²
                                let ff = f34.norm_sqr() * x34[m] * x34[k].conj();
                                let gg = g34.norm_sqr() * y34[m] * y34[k].conj();
                                add(am - ak, bm - bk, ff + gg);
                                // F*(3,4) G(4,3) with F from path k, G from path m
                                let fg = (f34 * x34[k]).conj() * g43 * y43[m];
                                add(bm - ak, am - bk, fg);
                                // F(4,3) G*(3,4) with F from path m, G from path k
                                let gf = f43 * x43[m] * (g34 * y34[k]).conj();
                                add(bm - ak, am - bk, gf);
                            }
                        }
                    }
                }
                c
            })
            .collect();

        let mut g00 = zero;
        let mut g_row = vec![zero; n];
        let mut g_col = vec![zero; n];
        let mut g_pp = DMatrix::<Complex64>::zeros(n, n);
        let mut g_pm = DMatrix::<Complex64>::zeros(n, n);
        for (j, c) in columns.into_iter().enumerate() {
            g00 += c.g00;
            for i in 0..n {
                g_row[i] += c.row[i];
            }
            g_col[j] = c.col;
            g_pp.column_mut(j).copy_from_slice(&c.pp);
            g_pm.column_mut(j).copy_from_slice(&c.pm);
        }
        Ok(Self {
            g00,
            g_row,
            g_col,
            g_pp,
            g_pm,
            detunings: js.detunings(),
            center: js.center(),
            spacing: js.spacing(),
            fsr: wg.free_spectral_range(),
            reflectivity: wg.reflectivity_r,
        })
    }

    pub fn check_resolution(&self, tau: f64) -> Result<()> {
        let phase = self.spacing * tau.abs();
        if phase > MAX_PHASE_PER_CELL {
            return Err(Error::Resolution(format!(
                "delay {tau:.3e} s advances the phase by {phase:.3} rad per grid cell (limit π/4)"
            )));
        }
        if self.reflectivity > 0.0 && self.spacing * MIN_POINTS_PER_FSR > self.fsr {
            return Err(Error::Resolution("grid does not resolve the free spectral range".into()));
        }
        Ok(())
    }

    /// Coincidence probability at `tau`; not clamped to [0, 1].
    pub fn coincidence(&self, tau: f64) -> Result<f64> {
        self.check_resolution(tau)?;
        let l: Vec<Complex64> = self.detunings.iter().map(|u| Complex64::from_polar(1.0, -u * tau)).collect();
        let carrier = Complex64::from_polar(1.0, -self.center * tau);
        let dot = |v: &[Complex64], e: &[Complex64]| -> Complex64 { v.iter().zip(e).map(|(a, b)| a * b).sum() };
        let lc: Vec<Complex64> = l.iter().map(|z| z.conj()).collect();
        let singles = (dot(&self.g_row, &l) + dot(&self.g_col, &l)) * carrier;
        let mut pp = Complex64::new(0.0, 0.0);
        let mut pm = Complex64::new(0.0, 0.0);
        for (j, (cpp, cpm)) in self.g_pp.column_iter().zip(self.g_pm.column_iter()).enumerate() {
            pp += dot(cpp.as_slice(), &l) * l[j];
            pm += dot(cpm.as_slice(), &l) * lc[j];
        }
        let pairs = pp * carrier * carrier + pm;
        let p = self.g00.re + singles.re + pairs.re;
        if !(-1e-6..=1.0 + 1e-6).contains(&p) {
            log::warn!("cavity coincidence {p} at τ = {tau:e} s lies outside [0, 1]");
        }
        Ok(p)
    }

    pub fn interferogram(&self, delays: &[f64]) -> Result<Vec<f64>> {
        delays.par_iter().map(|&t| self.coincidence(t)).collect()
    }
}

/// Unaveraged interferogram at the given delays.
pub fn raw_interferogram(js: &JointSpectrum, wg: &WaveguideConfig, delays: &[f64]) -> Result<Interferogram> {
    let kernel = CavityKernel::new(js, wg, Channel::Total)?;
    Interferogram::new(delays.to_vec(), kernel.interferogram(delays)?, None, ValueKind::Probability)
}

/// Raw delays needed to average over one pump period around each output
/// delay: `SAMPLES_PER_PERIOD + 1` points spanning the window.
pub fn averaging_samples(pump: &PumpConfig, out_delays: &[f64]) -> Vec<f64> {
    let period = pump.optical_period();
    let mut raw: Vec<f64> = out_delays
        .iter()
        .flat_map(|&t| {
            (0..=SAMPLES_PER_PERIOD)
                .map(move |m| t + (m as f64 / SAMPLES_PER_PERIOD as f64 - 0.5) * period)
        })
        .collect();
    raw.sort_by(|a, b| a.total_cmp(b));
    raw.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * period);
    raw
}

/// Integral of the piecewise-linear interpolant of `(x, y)` over `[lo, hi]`.
fn interpolant_integral(x: &[f64], y: &[f64], lo: f64, hi: f64) -> f64 {
    let interp = |t: f64, k: usize| -> f64 {
        let s = (t - x[k]) / (x[k + 1] - x[k]);
        y[k] + s * (y[k + 1] - y[k])
    };
    let mut total = 0.0;
    for k in 0..x.len() - 1 {
        let a = x[k].max(lo);
        let b = x[k + 1].min(hi);
        if b > a {
            total += 0.5 * (b - a) * (interp(a, k) + interp(b, k));
        }
    }
    total
}

/// Mean over a rectangular window of one pump period `2π/ω_p` centred on
/// each output delay.
pub fn average_fast_oscillation(
    raw: &Interferogram,
    pump: &PumpConfig,
    out_delays: &[f64],
) -> Result<Interferogram> {
    let period = pump.optical_period();
    let x = &raw.delays;
    let y = &raw.values;
    if x.len() < 2 {
        return Err(Error::Resolution("raw scan has fewer than two samples".into()));
    }
    let mut out = Vec::with_capacity(out_delays.len());
    for &t in out_delays {
        let (lo, hi) = (t - 0.5 * period, t + 0.5 * period);
        let tol = 1e-9 * period;
        if lo < x[0] - tol || hi > x[x.len() - 1] + tol {
            return Err(Error::Resolution(format!(
                "averaging window around {t:.4e} s extends beyond the raw scan"
            )));
        }
        let first = x.partition_point(|v| *v < lo - tol);
        let last = x.partition_point(|v| *v <= hi + tol);
        let inside = last - first;
        let mut gap: f64 = 0.0;
        let mut prev = lo;
        for &v in &x[first..last] {
            gap = gap.max(v - prev);
            prev = v;
        }
        gap = gap.max(hi - prev);
        if inside < MIN_SAMPLES_PER_WINDOW || gap > period / MIN_SAMPLES_PER_WINDOW as f64 + tol {
            return Err(Error::Resolution(format!(
                "{inside} raw samples (largest gap {gap:.3e} s) in the averaging window around \
                 {t:.4e} s; need at least {MIN_SAMPLES_PER_WINDOW} with gaps ≤ period/8"
            )));
        }
        out.push(interpolant_integral(x, y, lo.max(x[0]), hi.min(x[x.len() - 1])) / period);
    }
    Interferogram::new(out_delays.to_vec(), out, None, raw.kind)
}

/// Period-averaged interferogram at `out_delays`.
pub fn averaged_interferogram(
    js: &JointSpectrum,
    wg: &WaveguideConfig,
    pump: &PumpConfig,
    out_delays: &[f64],
) -> Result<Interferogram> {
    let raw_delays = averaging_samples(pump, out_delays);
    let raw = raw_interferogram(js, wg, &raw_delays)?;
    average_fast_oscillation(&raw, pump, out_delays)
}

/// Fit the drift-free model (`a = b = 0`) to an averaged interferogram.
pub fn effective_visibility_fit(avg: &Interferogram) -> Result<FitResult> {
    let guess = initial_guess(avg)?;
    let init = HomFitParams { a: 0.0, b: 0.0, ..guess };
    let opts = FitOptions::default().with_fixed(&[FitParam::A, FitParam::B]);
    fit_hom_interferogram(avg, &init, &opts)
}

pub fn effective_visibility(avg: &Interferogram) -> Result<f64> {
    Ok(effective_visibility_fit(avg)?.params.visibility)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::DispersionModel;
    use crate::hom::HomQuadrature;
    use crate::spectrum::{build_joint_spectrum, GridSpec};
    use approx::assert_relative_eq;

    const PS: f64 = 1e-12;

    fn preset_spectrum(points: usize) -> JointSpectrum {
        build_joint_spectrum(
            &PumpConfig::paper_device(),
            &DispersionModel::paper_device(),
            &GridSpec { points, n_sigma: 5.0 },
        )
        .unwrap()
    }

    fn wg(r: f64) -> WaveguideConfig {
        WaveguideConfig::paper_device().with_reflectivity(r).unwrap()
    }

    #[test]
    fn no_cavity_amplitudes() {
        let g = wg(0.0);
        for omega in [1.0e15, 1.2e15, 1.3e15] {
            let (fr, ft) = facet_amplitudes(omega, &g).unwrap();
            assert_eq!(fr, Complex64::new(0.0, 0.0));
            assert_relative_eq!(ft.norm(), 1.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn fsr_average_is_unity() {
        for r in [0.01, 0.1, 0.5, 0.9] {
            let g = wg(r);
            let fsr = g.free_spectral_range();
            let n = 4096;
            // periodic integrand: the rectangle rule is spectrally accurate
            let mean: f64 = (0..n)
                .map(|k| {
                    let (fr, ft) = facet_amplitudes(1.2e15 + fsr * k as f64 / n as f64, &g).unwrap();
                    fr.norm_sqr() + ft.norm_sqr()
                })
                .sum::<f64>()
                / n as f64;
            assert!((mean - 1.0).abs() < 1e-6, "R = {r}: {mean}");
        }
    }

    #[test]
    fn resonance_transmission() {
        let g = wg(0.1);
        // 2ωnL/c = 2π·m
        let omega = 4000.0 * g.free_spectral_range();
        let (_, ft) = facet_amplitudes(omega, &g).unwrap();
        assert_relative_eq!(ft.norm_sqr(), 1.0 / 0.9, max_relative = 1e-9);
    }

    #[test]
    fn singular_and_invalid_cavities() {
        assert!(matches!(
            wg(0.1).with_reflectivity(1.0),
            Err(Error::Invariant { field: "reflectivity_R", .. })
        ));
        let closed = WaveguideConfig { reflectivity_r: 1.0, ..wg(0.1) };
        assert!(matches!(facet_amplitudes(1e15, &closed), Err(Error::SingularCavity)));
        assert!(WaveguideConfig::new(2.6e-3, -0.1, 3.1).is_err());
        assert!(WaveguideConfig::new(0.0, 0.1, 3.1).is_err());
        assert!(WaveguideConfig::new(2.6e-3, 0.1, 1.0).is_err());
        assert!(matches!(facet_amplitudes(0.0, &wg(0.1)), Err(Error::Domain(_))));
    }

    #[test]
    fn coefficients_without_cavity() {
        let js = preset_spectrum(256);
        let g = wg(0.0);
        let (w1, w2, tau) = (js.center() + 2e12, js.center() + 1.9e12, 0.7 * PS);
        let (a, b, c, d) = mixed_coefficients(w1, w2, tau, &js, &g).unwrap();
        let (_, t1) = facet_amplitudes(w1, &g).unwrap();
        let (_, t2) = facet_amplitudes(w2, &g).unwrap();
        let phase = t1 * t2 * Complex64::from_polar(1.0, -w1 * tau);
        let hv = js.amplitude_at(Interaction::HV, w1, w2);
        let vh = js.amplitude_at(Interaction::VH, w1, w2);
        assert!((a - I * hv * phase).norm() < 1e-12 * hv.norm());
        assert!((b + I * vh * phase).norm() < 1e-12 * vh.norm());
        assert!((c - I * vh * phase).norm() < 1e-12 * vh.norm());
        assert!((d + I * hv * phase).norm() < 1e-12 * hv.norm());
    }

    #[test]
    fn pointwise_weight_depends_on_delay_only_with_cavity() {
        let js = preset_spectrum(256);
        let (w1, w2) = (js.center() + 1e12, js.center() - 3e12);
        let total = |r: f64, tau: f64| {
            let (a, b, c, d) = mixed_coefficients(w1, w2, tau, &js, &wg(r)).unwrap();
            a.norm_sqr() + b.norm_sqr() + c.norm_sqr() + d.norm_sqr()
        };
        assert_relative_eq!(total(0.0, 0.0), total(0.0, 3.3 * PS), max_relative = 1e-12);
        assert!((total(0.1, 0.0) - total(0.1, 3.3 * PS)).abs() > 1e-3 * total(0.1, 0.0));
    }

    #[test]
    fn no_cavity_matches_hom_quadrature() {
        let js = preset_spectrum(256);
        let g = wg(0.0);
        let hom = HomQuadrature::new(&js);
        let kernel = CavityKernel::new(&js, &g, Channel::Total).unwrap();
        for tau in [-20.0, -3.3, -0.65, 0.0, 0.4, 1.3, 7.0, 25.0] {
            let expected = hom.coincidence(tau * PS).unwrap();
            let direct = cavity_coincidence(tau * PS, &js, &g).unwrap();
            let fast = kernel.coincidence(tau * PS).unwrap();
            assert!((direct - expected).abs() < 1e-9, "τ = {tau} ps: {direct} vs {expected}");
            assert!((fast - expected).abs() < 1e-9, "τ = {tau} ps: {fast} vs {expected}");
        }
    }

    #[test]
    fn kernel_matches_direct_evaluation() {
        let js = preset_spectrum(768);
        let g = wg(0.1);
        for channel in [Channel::HV, Channel::VH, Channel::Total] {
            let kernel = CavityKernel::new(&js, &g, channel).unwrap();
            for tau in [-2.0, 0.0, 0.0013, 0.65, 5.0] {
                let fast = kernel.coincidence(tau * PS).unwrap();
                let direct = cavity_coincidence_channel(tau * PS, &js, &g, channel).unwrap();
                assert!((fast - direct).abs() < 1e-10, "{channel:?} τ = {tau} ps: {fast} vs {direct}");
            }
        }
    }

    #[test]
    fn channels_are_mirror_images_in_delay() {
        let js = preset_spectrum(768);
        let g = wg(0.1);
        let hv = CavityKernel::new(&js, &g, Channel::HV).unwrap();
        let vh = CavityKernel::new(&js, &g, Channel::VH).unwrap();
        let total = CavityKernel::new(&js, &g, Channel::Total).unwrap();
        assert!((hv.coincidence(0.0).unwrap() - vh.coincidence(0.0).unwrap()).abs() < 1e-12);
        for tau in [0.4, 1.3, 4.0, 12.0, 27.0] {
            let t = tau * PS;
            let a = hv.coincidence(t).unwrap();
            let b = vh.coincidence(-t).unwrap();
            assert!((a - b).abs() < 1e-12, "τ = {tau} ps: {a} vs {b}");
            let even = total.coincidence(t).unwrap() - total.coincidence(-t).unwrap();
            assert!(even.abs() < 1e-12);
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let js = preset_spectrum(512);
        assert!(matches!(CavityKernel::new(&js, &wg(0.1), Channel::Total), Err(Error::Resolution(_))));
        assert!(CavityKernel::new(&js, &wg(0.0), Channel::Total).is_ok());
    }

    #[test]
    fn averaging_identities() {
        let pump = PumpConfig::paper_device();
        let period = pump.optical_period();
        let out: Vec<f64> = (-5..=5).map(|k| k as f64 * 0.1 * PS).collect();
        let raw_t = averaging_samples(&pump, &out);
        let constant = Interferogram::probability(raw_t.clone(), vec![0.37; raw_t.len()]).unwrap();
        let avg = average_fast_oscillation(&constant, &pump, &out).unwrap();
        assert!(avg.values.iter().all(|v| (v - 0.37).abs() < 1e-14));

        let omega_p = pump.omega_p();
        let wave: Vec<f64> = raw_t.iter().map(|t| 0.5 + 0.5 * (omega_p * t).cos()).collect();
        let raw = Interferogram::probability(raw_t.clone(), wave).unwrap();
        let avg = average_fast_oscillation(&raw, &pump, &out).unwrap();
        assert!(avg.values.iter().all(|v| (v - 0.5).abs() < 0.5 * 1e-2 * 1e-3), "{:?}", avg.values);

        // a window with too few samples
        let sparse: Vec<f64> = (0..40).map(|k| k as f64 * period / 4.0).collect();
        let raw = Interferogram::probability(sparse.clone(), vec![0.5; sparse.len()]).unwrap();
        assert!(matches!(
            average_fast_oscillation(&raw, &pump, &[5.0 * period]),
            Err(Error::Resolution(_))
        ));
        // a window reaching past the scan
        assert!(average_fast_oscillation(&raw, &pump, &[0.0]).is_err());
    }

    #[test]
    fn tails_unaffected_by_averaging() {
        let js = preset_spectrum(768);
        let g = wg(0.01);
        let pump = PumpConfig::paper_device();
        let kernel = CavityKernel::new(&js, &g, Channel::Total).unwrap();
        let mut checked = 0;
        for tau in [-75.0, -40.0, 40.0, 75.0] {
            let out = [tau * PS];
            let raw_t = averaging_samples(&pump, &out);
            let raw_v = kernel.interferogram(&raw_t).unwrap();
            let spread = raw_v.iter().fold(0.0f64, |m, v| m.max((v - raw_v[0]).abs()));
            if spread >= 1e-6 {
                continue;
            }
            let raw = Interferogram::probability(raw_t, raw_v).unwrap();
            let avg = average_fast_oscillation(&raw, &pump, &out).unwrap();
            assert!((kernel.coincidence(out[0]).unwrap() - avg.values[0]).abs() < 1e-6);
            checked += 1;
        }
        assert!(checked >= 2, "{checked}");
    }

    #[test]
    fn visibility_drops_with_reflectivity() {
        let js = preset_spectrum(768);
        let pump = PumpConfig::paper_device();
        let out: Vec<f64> = (-150..=150).map(|k| k as f64 * 0.1 * PS).collect();
        let v: Vec<f64> = [0.0, 0.05, 0.1, 0.15, 0.2]
            .iter()
            .map(|&r| {
                let avg = averaged_interferogram(&js, &wg(r), &pump, &out).unwrap();
                effective_visibility(&avg).unwrap()
            })
            .collect();
        assert!((v[0] - 1.0).abs() < 1e-3, "{v:?}");
        assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
    }
}
