use thiserror::Error;

use crate::fitting::FitResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value violates a type invariant.
    #[error("invariant violated: {field} = {value}: {reason}")]
    Invariant {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// The phase-matching mismatch does not change sign over the bracket.
    #[error(
        "no phase matching for interaction {interaction}: mismatch is {mismatch_lo:e} at \
         {omega_lo:e} rad/s and {mismatch_hi:e} at {omega_hi:e} rad/s"
    )]
    NoPhaseMatching {
        interaction: &'static str,
        omega_lo: f64,
        omega_hi: f64,
        mismatch_lo: f64,
        mismatch_hi: f64,
    },

    /// A grid or sampling is too coarse for the requested accuracy.
    #[error("insufficient resolution: {0}")]
    Resolution(String),

    /// Density-matrix parameters outside the physical region.
    #[error("unphysical density matrix: {0}")]
    Physicality(String),

    /// Input carries no usable weight (empty, all zero, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// The cavity is lossless and closed (R = 1); amplitudes diverge.
    #[error("singular cavity: reflectivity R = 1 has no transmitted field")]
    SingularCavity,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The curvature matrix of a fit is singular in identifiable parameters.
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// The damped least-squares iteration hit its iteration cap.
    #[error("fit did not converge after {} iterations (objective {:e})", .best.iterations, .best.objective)]
    NonConvergence { best: Box<FitResult> },
}
