//! Modal refractive indices of the H (TE) and V (TM) waveguide modes.
//!
//! The model is first order in frequency, anchored at `omega_ref`:
//!
//! ```text
//! n_pol(ω) = n0_pol + (n_g − n0_pol) · (ω − ω_ref) / ω_ref
//! ```
//!
//! which makes `n + ω·dn/dω = n_g` at the reference frequency for both
//! polarizations. Everything downstream depends only on the birefringence
//! `Δn = n0_H − n0_V` and the group velocity `c / n_g`.

use serde::{Deserialize, Serialize};

use crate::{wavelength_to_omega, Error, Result, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    /// TE mode.
    H,
    /// TM mode.
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionModel {
    n0_h: f64,
    n0_v: f64,
    n_group: f64,
    omega_ref: f64,
}

fn check_index(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 1.0 && value < 10.0 {
        Ok(())
    } else {
        Err(Error::Invariant {
            field,
            value,
            reason: "waveguide index must lie in (1, 10)",
        })
    }
}

impl DispersionModel {
    pub fn new(n0_h: f64, n0_v: f64, n_group: f64, omega_ref: f64) -> Result<Self> {
        check_index("n0_H", n0_h)?;
        check_index("n0_V", n0_v)?;
        check_index("n_g", n_group)?;
        let dn = n0_h - n0_v;
        if dn.abs() >= 0.1 {
            return Err(Error::Invariant {
                field: "birefringence",
                value: dn,
                reason: "|n0_H - n0_V| must be below 0.1",
            });
        }
        if !(omega_ref.is_finite() && omega_ref > 0.0) {
            return Err(Error::Invariant {
                field: "omega_ref",
                value: omega_ref,
                reason: "reference frequency must be positive",
            });
        }
        Ok(Self {
            n0_h,
            n0_v,
            n_group,
            omega_ref,
        })
    }

    /// Calibration of the AlGaAs ridge device: `Δn = 1.2e-2`, `n_g = 3.15`,
    /// anchored at the degeneracy wavelength 1546.3 nm.
    pub fn paper_device() -> Self {
        Self::new(3.162, 3.150, 3.15, wavelength_to_omega(1546.3e-9))
            .expect("preset satisfies the model invariants")
    }

    pub fn n0(&self, pol: Polarization) -> f64 {
        match pol {
            Polarization::H => self.n0_h,
            Polarization::V => self.n0_v,
        }
    }

    pub fn n_group(&self) -> f64 {
        self.n_group
    }

    pub fn omega_ref(&self) -> f64 {
        self.omega_ref
    }

    /// `Δn = n0_H − n0_V`.
    pub fn birefringence(&self) -> f64 {
        self.n0_h - self.n0_v
    }

    pub fn modal_index(&self, pol: Polarization, omega: f64) -> Result<f64> {
        if !(omega > 0.0) {
            return Err(Error::Domain(format!(
                "modal index requested at non-positive frequency {omega}"
            )));
        }
        Ok(self.index_unchecked(pol, omega))
    }

    pub(crate) fn index_unchecked(&self, pol: Polarization, omega: f64) -> f64 {
        let n0 = self.n0(pol);
        n0 + (self.n_group - n0) * (omega - self.omega_ref) / self.omega_ref
    }

    /// Group velocity (m/s) shared by both polarizations.
    pub fn group_velocity(&self) -> f64 {
        group_velocity_for_index(self.n_group)
    }
}

/// `c / n_g`; with a shared group index this is also the harmonic mean of
/// the two modes' group velocities.
pub fn group_velocity_for_index(n_group: f64) -> f64 {
    SPEED_OF_LIGHT / n_group
}
