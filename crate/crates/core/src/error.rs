//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by solvers, quadratures and validators.
#[derive(Debug, Error)]
pub enum QkinError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("quadrature did not converge: achieved error estimate {achieved:.3e}, target {target:.3e}")]
    QuadratureNonConvergence { achieved: f64, target: f64 },

    #[error("pole at p_z = m omega/k lies inside the momentum support; choose Im(omega) != 0 or |omega/k| outside the support")]
    PoleOnSupport,

    #[error("resonant denominator overlaps the quadrature support (distance {distance:.3e} thermal widths)")]
    ResonanceOverlap { distance: f64 },

    #[error("CFL bound violated: dt*max|p_z/m|/dz = {ratio:.3} >= 1")]
    CflViolation { ratio: f64 },

    #[error("NaN detected at step {step} (t = {time:.6e})")]
    NanDetected { step: usize, time: f64 },

    #[error("root search did not converge after {iterations} iterations; last omega = {last_omega}, |residual| = {residual:.3e}")]
    NonConvergence {
        iterations: usize,
        last_omega: num_complex::Complex<f64>,
        residual: f64,
    },

    #[error("net charge on periodic domain: mean rho = {mean:.3e} (must vanish)")]
    NetCharge { mean: f64 },

    #[error("too few snapshots: need at least {needed}, got {got}")]
    TooFewSnapshots { needed: usize, got: usize },

    #[error("insufficient signal for mode fit: {0}")]
    InsufficientSignal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, QkinError>;
