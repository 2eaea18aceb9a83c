//! Restricted density matrix of the hybrid polarization-frequency state.
//!
//! Basis order: `|Hω₂⟩|Vω₁⟩, |Hω₁⟩|Vω₂⟩, |Vω₂⟩|Hω₁⟩, |Vω₁⟩|Hω₂⟩`
//! (signal first). Type-II generation and energy conservation leave only the
//! middle 2×2 block populated:
//!
//! ```text
//! ρ₂₂ = p,  ρ₃₃ = 1 − p,  ρ₂₃ = (V/2) e^{iφ}
//! ```

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestrictedDensityMatrix {
    p: f64,
    visibility: f64,
    phi: f64,
    matrix: Matrix4<Complex64>,
}

/// Slack on the positivity bound `V/2 ≤ √(p(1−p))` for round-off in the inputs.
const BOUND_SLACK: f64 = 1e-12;

pub fn build_density_matrix(p: f64, visibility: f64, phi: f64) -> Result<RestrictedDensityMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Physicality(format!("balance p = {p} violates 0 ≤ p ≤ 1")));
    }
    if !(visibility >= 0.0) {
        return Err(Error::Physicality(format!("visibility V = {visibility} violates 0 ≤ V/2")));
    }
    let bound = (p * (1.0 - p)).sqrt();
    if 0.5 * visibility > bound + BOUND_SLACK {
        return Err(Error::Physicality(format!(
            "coherence V/2 = {} violates V/2 ≤ √(p(1−p)) = {bound}",
            0.5 * visibility
        )));
    }
    if !phi.is_finite() {
        return Err(Error::Physicality(format!("phase φ = {phi} is not finite")));
    }
    let mut matrix = Matrix4::<Complex64>::zeros();
    matrix[(1, 1)] = Complex64::new(p, 0.0);
    matrix[(2, 2)] = Complex64::new(1.0 - p, 0.0);
    matrix[(1, 2)] = Complex64::from_polar(0.5 * visibility, phi);
    matrix[(2, 1)] = Complex64::from_polar(0.5 * visibility, -phi);
    Ok(RestrictedDensityMatrix {
        p,
        visibility,
        phi,
        matrix,
    })
}

/// The ideal state `(|Hω₁⟩|Vω₂⟩ + |Vω₂⟩|Hω₁⟩)/√2`.
pub fn ideal_state() -> Vector4<Complex64> {
    let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let z = Complex64::new(0.0, 0.0);
    Vector4::new(z, a, a, z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub purity: f64,
    pub fidelity: f64,
    pub concurrence: f64,
}

impl RestrictedDensityMatrix {
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn visibility(&self) -> f64 {
        self.visibility
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// `p² + (1−p)² + V²/2`.
    pub fn purity(&self) -> f64 {
        self.p * self.p + (1.0 - self.p).powi(2) + 0.5 * self.visibility * self.visibility
    }

    /// `Tr(ρ²)` from the matrix product.
    pub fn purity_from_matrix(&self) -> f64 {
        (self.matrix * self.matrix).trace().re
    }

    /// `(1 + V cos φ)/2`.
    pub fn fidelity_to_ideal(&self) -> f64 {
        0.5 * (1.0 + self.visibility * self.phi.cos())
    }

    /// `⟨Ψ|ρ|Ψ⟩` from the matrix.
    pub fn fidelity_from_matrix(&self) -> f64 {
        let psi = ideal_state();
        (psi.adjoint() * self.matrix * psi)[(0, 0)].re
    }

    /// With `ρ₁₁ = ρ₄₄ = 0` the concurrence equals the visibility.
    pub fn concurrence(&self) -> f64 {
        self.visibility
    }

    /// X-state concurrence `2·max(0, |ρ₂₃| − √(ρ₁₁ρ₄₄), |ρ₁₄| − √(ρ₂₂ρ₃₃))`
    /// read off the matrix elements.
    pub fn concurrence_from_matrix(&self) -> f64 {
        let m = &self.matrix;
        let inner = m[(1, 2)].norm() - (m[(0, 0)].re * m[(3, 3)].re).max(0.0).sqrt();
        let outer = m[(0, 3)].norm() - (m[(1, 1)].re * m[(2, 2)].re).max(0.0).sqrt();
        2.0 * inner.max(outer).max(0.0)
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            purity: self.purity(),
            fidelity: self.fidelity_to_ideal(),
            concurrence: self.concurrence(),
        }
    }

    /// First-order propagation of independent uncertainties on `p` and `V`.
    pub fn propagate_uncertainty(&self, dp: f64, dv: f64) -> Metrics {
        let dpur_dp = 4.0 * self.p - 2.0;
        let dpur_dv = self.visibility;
        let dfid_dv = 0.5 * self.phi.cos();
        Metrics {
            purity: (dpur_dp * dpur_dp * dp * dp + dpur_dv * dpur_dv * dv * dv).sqrt(),
            fidelity: (dfid_dv * dv).abs(),
            concurrence: dv.abs(),
        }
    }

    /// Largest disagreement between the closed-form and matrix-based metrics.
    pub fn self_check(&self) -> f64 {
        [
            self.purity() - self.purity_from_matrix(),
            self.fidelity_to_ideal() - self.fidelity_from_matrix(),
            self.concurrence() - self.concurrence_from_matrix(),
        ]
        .iter()
        .fold(0.0, |acc, d| acc.max(d.abs()))
    }
}
