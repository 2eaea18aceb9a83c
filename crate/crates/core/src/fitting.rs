//! Damped least-squares fit of interferograms to the drift-corrected model
//!
//! ```text
//! P(τ) = ½ [1 − V exp(−τ²/2Δτ²) cos(μτ)] + aτ + b
//! ```
//!
//! The iteration runs in picosecond units (τ and Δτ in ps, μ in rad/ps, a in
//! 1/ps) to keep the normal equations well scaled; results are reported in
//! SI units.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::hom::{HomFitParams, Interferogram, ValueKind};
use crate::{Error, Result};

const NPAR: usize = 5;
const PS: f64 = 1e-12;
/// SI value = internal value × scale.
const SI_SCALE: [f64; NPAR] = [1.0, PS, 1.0 / PS, 1.0 / PS, 1.0];

pub const MIN_FIT_POINTS: usize = 10;
pub const MIN_GUESS_POINTS: usize = 4;
pub const RELATIVE_OBJECTIVE_TOL: f64 = 1e-10;
pub const GRADIENT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 500;

type Vec5 = SVector<f64, NPAR>;
type Mat5 = SMatrix<f64, NPAR, NPAR>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitParam {
    Visibility,
    DeltaTau,
    Mu,
    A,
    B,
}

impl FitParam {
    pub const ALL: [FitParam; NPAR] = [
        FitParam::Visibility,
        FitParam::DeltaTau,
        FitParam::Mu,
        FitParam::A,
        FitParam::B,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Parameters held at their initial value.
    pub fixed: Vec<FitParam>,
    /// Counts corresponding to probability 1. Estimated from the tails of
    /// count data when absent.
    pub counts_scale: Option<f64>,
    pub initial_damping: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            fixed: Vec::new(),
            counts_scale: None,
            initial_damping: 1e-3,
        }
    }
}

impl FitOptions {
    pub fn with_fixed(mut self, params: &[FitParam]) -> Self {
        self.fixed.extend_from_slice(params);
        self
    }

    fn is_fixed(&self, k: usize) -> bool {
        self.fixed.iter().any(|p| p.index() == k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: HomFitParams,
    /// Covariance in SI units, parameter order `V, Δτ, μ, a, b`. Rows of fixed
    /// or degenerate parameters are zero.
    pub covariance: [[f64; NPAR]; NPAR],
    /// One-sigma errors; `None` for fixed or degenerate parameters.
    pub std_errors: [Option<f64>; NPAR],
    pub reduced_chi2: f64,
    pub iterations: usize,
    /// Weighted sum of squared residuals at `params`.
    pub objective: f64,
    pub converged: bool,
    /// Free parameters the data does not constrain (zero curvature).
    pub degenerate: Vec<FitParam>,
    /// Objective after each accepted step, starting with the initial point.
    pub objective_trace: Vec<f64>,
    /// Counts per unit probability used for count data.
    pub counts_scale: Option<f64>,
}

impl FitResult {
    pub fn std_error(&self, p: FitParam) -> Option<f64> {
        self.std_errors[p.index()]
    }
}

fn to_internal(p: &HomFitParams) -> Vec5 {
    Vec5::from([
        p.visibility,
        p.delta_tau / SI_SCALE[1],
        p.mu / SI_SCALE[2],
        p.a / SI_SCALE[3],
        p.b,
    ])
}

fn to_si(x: &Vec5) -> HomFitParams {
    HomFitParams {
        visibility: x[0],
        delta_tau: x[1] * SI_SCALE[1],
        mu: x[2] * SI_SCALE[2],
        a: x[3] * SI_SCALE[3],
        b: x[4],
    }
}

/// Smallest admissible envelope width (ps).
const MIN_DELTA_TAU: f64 = 1e-9;

fn project(x: &mut Vec5) {
    x[0] = x[0].clamp(0.0, 1.0);
    x[1] = x[1].max(MIN_DELTA_TAU);
    x[2] = x[2].max(0.0);
}

fn at_lower_bound(x: &Vec5, k: usize) -> bool {
    match k {
        0 => x[0] <= 0.0,
        1 => x[1] <= MIN_DELTA_TAU,
        2 => x[2] <= 0.0,
        _ => false,
    }
}

fn model_and_gradient(t: f64, x: &Vec5) -> (f64, Vec5) {
    let (v, dt, mu, a, b) = (x[0], x[1], x[2], x[3], x[4]);
    let g = (-t * t / (2.0 * dt * dt)).exp();
    let (s, c) = (mu * t).sin_cos();
    let m = 0.5 * (1.0 - v * g * c) + a * t + b;
    let grad = Vec5::from([
        -0.5 * g * c,
        -0.5 * v * c * g * t * t / (dt * dt * dt),
        0.5 * v * g * t * s,
        t,
        1.0,
    ]);
    (m, grad)
}

/// Weighted observations in probability units.
struct Prepared {
    t: Vec<f64>,
    y: Vec<f64>,
    inv_sigma: Vec<f64>,
    /// False when no uncertainties were available and unit weights are used.
    weighted: bool,
    counts_scale: Option<f64>,
    /// Relative uncertainty of an estimated counts scale.
    scale_error: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Indices of points in the outer parts of the delay span.
fn tail_indices(t: &[f64]) -> Vec<usize> {
    let (lo, hi) = (t[0], t[t.len() - 1]);
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    (0..t.len()).filter(|&i| (t[i] - mid).abs() >= 0.6 * half).collect()
}

/// Counts per unit probability estimated from the tails, where the model
/// tends to ½.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountsScale {
    /// Twice the mean tail count.
    pub value: f64,
    /// Poisson relative uncertainty `1/√(Σ tail counts)`.
    pub relative_error: f64,
}

pub fn estimate_counts_scale(data: &Interferogram) -> Result<CountsScale> {
    if data.len() < MIN_GUESS_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} points; at least {MIN_GUESS_POINTS} are required",
            data.len()
        )));
    }
    let tails = tail_indices(&data.delays);
    let total: f64 = tails.iter().map(|&i| data.values[i]).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateInput("tail counts are zero; cannot normalize".into()));
    }
    Ok(CountsScale {
        value: 2.0 * total / tails.len() as f64,
        relative_error: total.sqrt().recip(),
    })
}

fn prepare(data: &Interferogram, opts: &FitOptions) -> Result<Prepared> {
    let t: Vec<f64> = data.delays.iter().map(|d| d / PS).collect();
    match data.kind {
        ValueKind::Probability => {
            let (inv_sigma, weighted) = match &data.errors {
                Some(e) => (e.iter().map(|s| 1.0 / s).collect(), true),
                None => (vec![1.0; data.len()], false),
            };
            Ok(Prepared {
                t,
                y: data.values.clone(),
                inv_sigma,
                weighted,
                counts_scale: None,
                scale_error: 0.0,
            })
        }
        ValueKind::Counts => {
            let (scale, scale_error) = match opts.counts_scale {
                Some(s) if s > 0.0 && s.is_finite() => (s, 0.0),
                Some(s) => {
                    return Err(Error::Domain(format!("counts scale {s} must be positive")));
                }
                None => {
                    let est = estimate_counts_scale(data)?;
                    (est.value, est.relative_error)
                }
            };
            let inv_sigma = match &data.errors {
                Some(e) => e.iter().map(|s| scale / s).collect(),
                // Poisson; empty bins get the error of a single count
                None => data.values.iter().map(|c| scale / c.max(1.0).sqrt()).collect(),
            };
            Ok(Prepared {
                t,
                y: data.values.iter().map(|c| c / scale).collect(),
                inv_sigma,
                weighted: true,
                counts_scale: Some(scale),
                scale_error,
            })
        }
    }
}

struct Linearization {
    objective: f64,
    jtj: Mat5,
    jtr: Vec5,
    col_norm: Vec5,
    res_norm: f64,
}

fn objective(p: &Prepared, x: &Vec5) -> f64 {
    p.t.iter()
        .zip(&p.y)
        .zip(&p.inv_sigma)
        .map(|((&t, &y), &w)| {
            let r = (model_and_gradient(t, x).0 - y) * w;
            r * r
        })
        .sum()
}

fn linearize(p: &Prepared, x: &Vec5, free: &[bool; NPAR]) -> Linearization {
    let mut jtj = Mat5::zeros();
    let mut jtr = Vec5::zeros();
    let mut obj = 0.0;
    for ((&t, &y), &w) in p.t.iter().zip(&p.y).zip(&p.inv_sigma) {
        let (m, mut g) = model_and_gradient(t, x);
        for k in 0..NPAR {
            if !free[k] {
                g[k] = 0.0;
            }
        }
        let r = (m - y) * w;
        let j = g * w;
        obj += r * r;
        jtj += j * j.transpose();
        jtr += j * r;
    }
    let col_norm = Vec5::from_fn(|k, _| jtj[(k, k)].sqrt());
    Linearization {
        objective: obj,
        jtj,
        jtr,
        col_norm,
        res_norm: obj.sqrt(),
    }
}

/// Largest cosine between the residual vector and a free Jacobian column,
/// ignoring parameters pressed against a bound.
fn scaled_gradient(lin: &Linearization, x: &Vec5, free: &[bool; NPAR]) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..NPAR {
        if !free[k] || lin.col_norm[k] == 0.0 || lin.res_norm == 0.0 {
            continue;
        }
        // descent direction is −jtr; a bound blocks it when that points outward
        if at_lower_bound(x, k) && lin.jtr[k] > 0.0 {
            continue;
        }
        if k == 0 && x[0] >= 1.0 && lin.jtr[0] < 0.0 {
            continue;
        }
        worst = worst.max(lin.jtr[k].abs() / (lin.col_norm[k] * lin.res_norm));
    }
    worst
}

fn degenerate_columns(lin: &Linearization, free: &[bool; NPAR]) -> [bool; NPAR] {
    let max_norm = (0..NPAR).filter(|&k| free[k]).map(|k| lin.col_norm[k]).fold(0.0, f64::max);
    let mut out = [false; NPAR];
    for k in 0..NPAR {
        out[k] = free[k] && lin.col_norm[k] <= 1e-10 * max_norm;
    }
    out
}

fn check_init(p: &HomFitParams) -> Result<()> {
    if !(0.0..=1.0).contains(&p.visibility) {
        return Err(Error::Domain(format!("initial visibility {} outside [0, 1]", p.visibility)));
    }
    if !(p.delta_tau > 0.0) {
        return Err(Error::Domain(format!("initial Δτ {} must be positive", p.delta_tau)));
    }
    if !(p.mu >= 0.0) {
        return Err(Error::Domain(format!("initial μ {} must be non-negative", p.mu)));
    }
    if ![p.a, p.b, p.delta_tau, p.mu].iter().all(|v| v.is_finite()) {
        return Err(Error::Domain("initial parameters must be finite".into()));
    }
    Ok(())
}

/// Fit the drift-corrected model to `data` starting from `init`.
///
/// Weights are `1/σ²` with Poisson `σ = √counts` for count data, the given
/// uncertainties otherwise, or unit weights for bare probabilities (the
/// covariance is then rescaled by the reduced χ²).
pub fn fit_hom_interferogram(
    data: &Interferogram,
    init: &HomFitParams,
    opts: &FitOptions,
) -> Result<FitResult> {
    if data.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} points; at least {MIN_FIT_POINTS} are required",
            data.len()
        )));
    }
    check_init(init)?;
    let span = data.delays[data.len() - 1] - data.delays[0];
    if init.mu > 0.0 && span < init.period() {
        return Err(Error::InsufficientData(format!(
            "delay span {span:.3e} s is shorter than one beat period {:.3e} s",
            init.period()
        )));
    }
    let prep = prepare(data, opts)?;
    let mut free = [true; NPAR];
    for (k, f) in free.iter_mut().enumerate() {
        *f = !opts.is_fixed(k);
    }
    let n_free = free.iter().filter(|f| **f).count();

    let mut x = to_internal(init);
    project(&mut x);
    let mut lin = linearize(&prep, &x, &free);
    let mut trace = vec![lin.objective];
    let mut lambda = opts.initial_damping;
    let floor = 1e-28 * prep.t.len() as f64;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        if lin.objective <= floor || scaled_gradient(&lin, &x, &free) < GRADIENT_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let max_diag = (0..NPAR).map(|k| lin.jtj[(k, k)]).fold(0.0, f64::max);
        let mut accepted = false;
        while lambda < 1e20 {
            let mut a = lin.jtj;
            for k in 0..NPAR {
                if free[k] {
                    a[(k, k)] += lambda * lin.jtj[(k, k)].max(1e-12 * max_diag);
                } else {
                    a.row_mut(k).fill(0.0);
                    a.column_mut(k).fill(0.0);
                    a[(k, k)] = 1.0;
                }
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-lin.jtr)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut trial = x + step;
            project(&mut trial);
            let trial_obj = objective(&prep, &trial);
            if trial_obj < lin.objective {
                let rel = (lin.objective - trial_obj) / lin.objective;
                x = trial;
                lin = linearize(&prep, &x, &free);
                trace.push(lin.objective);
                lambda = (lambda / 3.0).max(1e-15);
                accepted = true;
                if rel < RELATIVE_OBJECTIVE_TOL {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // no descent to machine precision: the point is stationary
            converged = true;
            break;
        }
    }

    let degenerate = degenerate_columns(&lin, &free);
    let identifiable: Vec<usize> = (0..NPAR).filter(|&k| free[k] && !degenerate[k]).collect();
    let dof = prep.t.len().saturating_sub(n_free).max(1);
    let reduced_chi2 = lin.objective / dof as f64;
    let m = identifiable.len();
    let curvature = DMatrix::from_fn(m, m, |r, c| lin.jtj[(identifiable[r], identifiable[c])]);
    let inv = if m == 0 {
        Some(DMatrix::zeros(0, 0))
    } else {
        // scale to unit diagonal before inverting
        let d = DVector::from_fn(m, |r, _| curvature[(r, r)].sqrt().recip());
        let scaled = DMatrix::from_fn(m, m, |r, c| curvature[(r, c)] * d[r] * d[c]);
        scaled
            .cholesky()
            .map(|ch| ch.inverse())
            .map(|s| DMatrix::from_fn(m, m, |r, c| s[(r, c)] * d[r] * d[c]))
    };
    let inv = inv.ok_or_else(|| {
        Error::DegenerateFit(format!(
            "curvature matrix is singular for parameters {:?}",
            identifiable.iter().map(|&k| FitParam::ALL[k]).collect::<Vec<_>>()
        ))
    })?;
    let cov_factor = if prep.weighted { 1.0 } else { reduced_chi2 };
    let mut covariance = [[0.0; NPAR]; NPAR];
    for (r, &kr) in identifiable.iter().enumerate() {
        for (c, &kc) in identifiable.iter().enumerate() {
            covariance[kr][kc] = inv[(r, c)] * cov_factor * SI_SCALE[kr] * SI_SCALE[kc];
        }
    }
    if prep.scale_error > 0.0 {
        // V, a and b are all inversely proportional to the counts scale
        let mut sens = [0.0; NPAR];
        sens[0] = x[0];
        sens[3] = x[3];
        sens[4] = 0.5 + x[4];
        let var = prep.scale_error * prep.scale_error;
        for &kr in &identifiable {
            for &kc in &identifiable {
                covariance[kr][kc] += sens[kr] * sens[kc] * var * SI_SCALE[kr] * SI_SCALE[kc];
            }
        }
    }
    let mut std_errors = [None; NPAR];
    for &k in &identifiable {
        std_errors[k] = Some(covariance[k][k].max(0.0).sqrt());
    }

    let result = FitResult {
        params: to_si(&x),
        covariance,
        std_errors,
        reduced_chi2,
        iterations,
        objective: lin.objective,
        converged,
        degenerate: (0..NPAR).filter(|&k| degenerate[k]).map(|k| FitParam::ALL[k]).collect(),
        objective_trace: trace,
        counts_scale: prep.counts_scale,
    };
    if !converged {
        return Err(Error::NonConvergence {
            best: Box::new(result),
        });
    }
    Ok(result)
}

/// Peak of the discrete spectrum of the mean-free data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPeak {
    /// Angular frequency of the peak (rad/s).
    pub omega: f64,
    /// The peak lies below one cycle per delay span.
    pub low_frequency: bool,
}

/// Dominant angular frequency of `values` sampled at `delays` (s), after
/// removing a straight line fitted to the outer parts of the span. Uses a
/// zero-padded direct Fourier sum with parabolic peak refinement.
pub fn dominant_angular_frequency(delays: &[f64], values: &[f64]) -> Result<SpectralPeak> {
    let n = delays.len();
    if n < MIN_GUESS_POINTS {
        return Err(Error::InsufficientData(format!(
            "{n} points; at least {MIN_GUESS_POINTS} are required"
        )));
    }
    let span = delays[n - 1] - delays[0];
    if !(span > 0.0) {
        return Err(Error::DegenerateInput("delays span zero time".into()));
    }
    let tails = tail_indices(delays);
    let (slope, offset) = if tails.len() >= 2 {
        let tt: Vec<f64> = tails.iter().map(|&i| delays[i]).collect();
        let yy: Vec<f64> = tails.iter().map(|&i| values[i]).collect();
        linear_fit(&tt, &yy)
    } else {
        linear_fit(delays, values)
    };
    let d: Vec<f64> = delays.iter().zip(values).map(|(t, v)| v - slope * t - offset).collect();
    let w = crate::spectrum::trapezoid_weights(delays);
    let steps: Vec<f64> = delays.windows(2).map(|p| p[1] - p[0]).collect();
    let nyquist = std::f64::consts::PI / median(steps);
    let d_omega = std::f64::consts::TAU / (4.0 * span);
    let bins = (nyquist / d_omega).ceil() as usize + 1;
    let power = |omega: f64| -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for ((t, v), wt) in delays.iter().zip(&d).zip(&w) {
            let (s, c) = (omega * t).sin_cos();
            re += wt * v * c;
            im += wt * v * s;
        }
        re * re + im * im
    };
    let spectrum: Vec<f64> = (0..bins).map(|k| power(k as f64 * d_omega)).collect();
    let (k, _) = spectrum
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, p)| if *p > acc.1 { (k, *p) } else { acc });
    let mut omega = k as f64 * d_omega;
    if k > 0 && k + 1 < bins {
        let (a, b, c) = (spectrum[k - 1], spectrum[k], spectrum[k + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            omega += 0.5 * (a - c) / denom * d_omega;
        }
    }
    Ok(SpectralPeak {
        omega,
        low_frequency: omega < std::f64::consts::TAU / span,
    })
}

/// Least-squares `(slope, offset)` of `y ≈ slope·x + offset`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Heuristic starting point for [`fit_hom_interferogram`].
pub fn initial_guess(data: &Interferogram) -> Result<HomFitParams> {
    initial_guess_with(data, &FitOptions::default())
}

pub fn initial_guess_with(data: &Interferogram, opts: &FitOptions) -> Result<HomFitParams> {
    if data.len() < MIN_GUESS_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} points; at least {MIN_GUESS_POINTS} are required",
            data.len()
        )));
    }
    let prep = prepare(data, opts)?;
    let t = &prep.t;
    let y = &prep.y;
    let n = t.len();
    let half = 0.5 * (t[n - 1] - t[0]);
    let mid = 0.5 * (t[n - 1] + t[0]);

    let tails = tail_indices(t);
    let (a, b) = if tails.len() >= 2 {
        let tt: Vec<f64> = tails.iter().map(|&i| t[i]).collect();
        let yy: Vec<f64> = tails.iter().map(|&i| y[i] - 0.5).collect();
        linear_fit(&tt, &yy)
    } else {
        (0.0, y.iter().sum::<f64>() / n as f64 - 0.5)
    };
    let flat: Vec<f64> = t.iter().zip(y).map(|(ti, yi)| yi - a * ti - b).collect();

    let central: Vec<usize> = (0..n).filter(|&i| (t[i] - mid).abs() <= 0.5 * half).collect();
    let central = if central.is_empty() { (0..n).collect() } else { central };
    let hi = central.iter().map(|&i| flat[i]).fold(f64::NEG_INFINITY, f64::max);
    let lo = central.iter().map(|&i| flat[i]).fold(f64::INFINITY, f64::min);
    let visibility = if hi + lo > 0.0 {
        ((hi - lo) / (hi + lo)).clamp(0.0, 1.0)
    } else {
        0.0
    };

    // envelope second moment of |P − ½| above the tail noise floor
    let dev: Vec<f64> = flat.iter().map(|f| (f - 0.5).abs()).collect();
    let noise = if tails.is_empty() {
        0.0
    } else {
        median(tails.iter().map(|&i| dev[i]).collect())
    };
    let wts: Vec<f64> = dev.iter().map(|d| (d - noise).max(0.0)).collect();
    let wsum: f64 = wts.iter().sum();
    let delta_tau_ps = if wsum > 0.0 {
        let c = wts.iter().zip(t).map(|(w, ti)| w * ti).sum::<f64>() / wsum;
        let m2 = wts.iter().zip(t).map(|(w, ti)| w * (ti - c) * (ti - c)).sum::<f64>() / wsum;
        m2.sqrt().max(1e-6 * half)
    } else {
        0.5 * half
    };

    let peak = dominant_angular_frequency(&data.delays, &flat)?;
    if peak.low_frequency {
        log::debug!("dominant beat frequency {:e} rad/s is below one cycle per span", peak.omega);
    }
    Ok(HomFitParams {
        visibility,
        delta_tau: delta_tau_ps * PS,
        mu: peak.omega,
        a: a / PS,
        b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hom::fit_model;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    fn truth() -> HomFitParams {
        HomFitParams::new(0.701, 10.0 * PS, std::f64::consts::TAU / (1.8 * PS), 0.0, 0.0).unwrap()
    }

    fn delays(n: usize, half_ps: f64) -> Vec<f64> {
        (0..n)
            .map(|k| (-half_ps + 2.0 * half_ps * k as f64 / (n - 1) as f64) * PS)
            .collect()
    }

    fn synthetic(p: &HomFitParams, t: &[f64]) -> Interferogram {
        Interferogram::probability(t.to_vec(), t.iter().map(|&x| fit_model(x, p)).collect()).unwrap()
    }

    fn perturbed(p: &HomFitParams, f: f64) -> HomFitParams {
        HomFitParams {
            visibility: p.visibility * (1.0 - 0.5 * f),
            delta_tau: p.delta_tau * (1.0 + f),
            mu: p.mu * (1.0 + 0.2 * f),
            a: p.a + 1e8 * f,
            b: p.b + 0.02 * f,
        }
    }

    #[test]
    fn noiseless_recovery() {
        let p = truth();
        let data = synthetic(&p, &delays(241, 30.0));
        let fit = fit_hom_interferogram(&data, &perturbed(&p, 0.1), &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.params.visibility, p.visibility, max_relative = 1e-6);
        assert_relative_eq!(fit.params.delta_tau, p.delta_tau, max_relative = 1e-6);
        assert_relative_eq!(fit.params.mu, p.mu, max_relative = 1e-6);
        assert!(fit.params.a.abs() < 1e-6 * 1e12 * 1e-4, "{}", fit.params.a);
        assert!(fit.params.b.abs() < 1e-8, "{}", fit.params.b);
        let rms = (fit.objective / data.len() as f64).sqrt();
        assert!(rms < 1e-8, "{rms}");
    }

    #[test]
    fn objective_monotone_on_accepted_steps() {
        let p = truth();
        let data = synthetic(&p, &delays(241, 30.0));
        let fit = fit_hom_interferogram(&data, &perturbed(&p, 0.2), &FitOptions::default()).unwrap();
        assert!(fit.objective_trace.len() > 2);
        assert!(fit.objective_trace.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn guess_within_thirty_percent() {
        let p = HomFitParams { a: 2e8, b: 0.01, ..truth() };
        let data = synthetic(&p, &delays(241, 30.0));
        let g = initial_guess(&data).unwrap();
        assert!((g.visibility / p.visibility - 1.0).abs() < 0.3, "{g:?}");
        assert!((g.delta_tau / p.delta_tau - 1.0).abs() < 0.3, "{g:?}");
        assert!((g.mu / p.mu - 1.0).abs() < 0.3, "{g:?}");
        assert!((g.a / p.a - 1.0).abs() < 0.3, "{g:?}");
        assert!((g.b - p.b).abs() < 0.3 * p.b, "{g:?}");
        let fit = fit_hom_interferogram(&data, &g, &FitOptions::default()).unwrap();
        assert_relative_eq!(fit.params.visibility, p.visibility, max_relative = 1e-6);
    }

    #[test]
    fn gaussian_dip_flags_low_frequency() {
        let p = HomFitParams { mu: 0.0, ..truth() };
        let t = delays(201, 40.0);
        let y: Vec<f64> = t.iter().map(|&x| fit_model(x, &p)).collect();
        let peak = dominant_angular_frequency(&t, &y).unwrap();
        assert!(peak.low_frequency);
        assert!(peak.omega < std::f64::consts::TAU / (80.0 * PS));
    }

    #[test]
    fn constant_data() {
        let t = delays(101, 30.0);
        let data = Interferogram::probability(t.clone(), vec![0.5; t.len()]).unwrap();
        let g = initial_guess(&data).unwrap();
        assert_eq!(g.visibility, 0.0);
        let init = HomFitParams { mu: 1e12, ..g };
        let fit = fit_hom_interferogram(&data, &init, &FitOptions::default()).unwrap();
        assert!(fit.params.visibility < 1e-9);
        assert!(fit.degenerate.contains(&FitParam::Mu));
        assert!(fit.degenerate.contains(&FitParam::DeltaTau));
        assert!(fit.std_error(FitParam::Mu).is_none());
    }

    #[test]
    fn sampling_window_shifted_by_whole_periods() {
        let p = truth();
        let t = delays(241, 30.0);
        let fit = fit_hom_interferogram(&synthetic(&p, &t), &perturbed(&p, 0.05), &FitOptions::default()).unwrap();
        let shift = 3.0 * p.period();
        let moved: Vec<f64> = t.iter().map(|x| x + shift).collect();
        let refit =
            fit_hom_interferogram(&synthetic(&p, &moved), &perturbed(&p, 0.05), &FitOptions::default()).unwrap();
        assert_relative_eq!(refit.params.visibility, fit.params.visibility, max_relative = 1e-6);
        assert_relative_eq!(refit.params.delta_tau, fit.params.delta_tau, max_relative = 1e-6);
        assert!((refit.params.b - fit.params.b).abs() < 1e-8);
    }

    #[test]
    fn fixed_parameters_stay_put() {
        let p = truth();
        let data = synthetic(&p, &delays(121, 30.0));
        let init = HomFitParams { a: 0.0, b: 0.0, ..perturbed(&p, 0.1) };
        let opts = FitOptions::default().with_fixed(&[FitParam::A, FitParam::B]);
        let fit = fit_hom_interferogram(&data, &init, &opts).unwrap();
        assert_eq!(fit.params.a, 0.0);
        assert_eq!(fit.params.b, 0.0);
        assert!(fit.std_error(FitParam::A).is_none());
        assert_relative_eq!(fit.params.visibility, p.visibility, max_relative = 1e-6);
    }

    #[test]
    fn rejects_bad_requests() {
        let p = truth();
        let data = synthetic(&p, &delays(8, 30.0));
        assert!(matches!(
            fit_hom_interferogram(&data, &p, &FitOptions::default()),
            Err(Error::InsufficientData(_))
        ));
        let short = synthetic(&p, &delays(50, 0.5));
        assert!(matches!(
            fit_hom_interferogram(&short, &p, &FitOptions::default()),
            Err(Error::InsufficientData(_))
        ));
        let data = synthetic(&p, &delays(50, 30.0));
        let bad = HomFitParams { visibility: 1.5, ..p };
        assert!(fit_hom_interferogram(&data, &bad, &FitOptions::default()).is_err());
        let tiny = Interferogram::probability(vec![0.0, 1.0, 2.0], vec![0.5; 3]).unwrap();
        assert!(matches!(initial_guess(&tiny), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn iteration_cap_reports_best() {
        let p = truth();
        let data = synthetic(&p, &delays(241, 30.0));
        let opts = FitOptions { max_iterations: 1, ..FitOptions::default() };
        match fit_hom_interferogram(&data, &perturbed(&p, 0.3), &opts) {
            Err(Error::NonConvergence { best }) => {
                assert_eq!(best.iterations, 1);
                assert!(best.objective < best.objective_trace[0]);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn poisson_coverage() {
        let p = truth();
        let t = delays(241, 30.0);
        let scale = 1000.0;
        let mut rng = ChaCha8Rng::seed_from_u64(20_260_417);
        let mut covered = 0;
        for _ in 0..100 {
            let counts: Vec<f64> = t
                .iter()
                .map(|&x| Poisson::new(scale * fit_model(x, &p)).unwrap().sample(&mut rng))
                .collect();
            let data = Interferogram::new(t.clone(), counts, None, ValueKind::Counts).unwrap();
            let g = initial_guess(&data).unwrap();
            let fit = fit_hom_interferogram(&data, &g, &FitOptions::default()).unwrap();
            let sigma = fit.std_error(FitParam::Visibility).unwrap();
            if (fit.params.visibility - p.visibility).abs() <= sigma {
                covered += 1;
            }
        }
        assert!(covered >= 60, "{covered}/100");
    }

    #[test]
    fn covariance_symmetric_psd() {
        let p = truth();
        let t = delays(241, 30.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let counts: Vec<f64> = t
            .iter()
            .map(|&x| Poisson::new(1000.0 * fit_model(x, &p)).unwrap().sample(&mut rng))
            .collect();
        let data = Interferogram::new(t, counts, None, ValueKind::Counts).unwrap();
        let fit = fit_hom_interferogram(&data, &initial_guess(&data).unwrap(), &FitOptions::default()).unwrap();
        let c = nalgebra::Matrix5::from_fn(|r, k| fit.covariance[r][k]);
        let scale = nalgebra::Matrix5::from_fn(|r, k| if r == k { c[(r, r)].sqrt().recip() } else { 0.0 });
        let corr = scale * c * scale;
        assert!((corr - corr.transpose()).norm() < 1e-9);
        assert!(corr.symmetric_eigenvalues().iter().all(|l| *l > -1e-9));
        assert!((fit.reduced_chi2 - 1.0).abs() < 0.3, "{}", fit.reduced_chi2);
    }
}
