//! Kinetic theory of electrostatic waves in spin-1/2 electron plasmas with
//! weakly relativistic quantum corrections.
//!
//! The crate covers four layers:
//!
//! * plasma parameter derivation and regime classification ([`params`]),
//! * equilibrium distributions over the extended (momentum, spin) phase
//!   space and their moments ([`equilibrium`], [`phasespace`], [`moments`]),
//! * a nonlinear 1D1V Vlasov-Poisson solver with the electric-field-gradient
//!   (Darwin) correction and mode diagnostics ([`kinetic`]),
//! * linear response and dispersion relations for unmagnetized Langmuir
//!   waves and magnetized spin-orbit coupled waves, with complex root
//!   finding and branch scans ([`linresp`], [`dispersion`]).
//!
//! Internally the solver works in nondimensional units (time in 1/omega_p,
//! speed in c, momentum in m*c); physical inputs and outputs are Gaussian
//! CGS. See [`constants`] for the pinned constant table.

pub mod constants;
pub mod dispersion;
pub mod equilibrium;
pub mod error;
pub mod io;
pub mod kinetic;
pub mod linresp;
pub mod moments;
pub mod params;
pub mod phasespace;
pub mod quadrature;

pub use dispersion::{BranchPoint, DispersionKind, DispersionProblem, DispersionRoot};
pub use equilibrium::{Equilibrium, Equilibrium1D, EquilibriumSpin};
pub use error::QkinError;
pub use kinetic::{FieldState, ModeFit, RunOutput, Snapshot, SolverConfig};
pub use linresp::{HarmonicSolution, ModeSpec, QuadSpec};
pub use moments::{EnergyAudit, MomentScales, MomentSet};
pub use params::{PlasmaParams, PlasmaState, RegimeReport};
pub use phasespace::{DistributionField, PhaseGrid, SpinVector};

/// Complex double used throughout.
pub type C64 = num_complex::Complex<f64>;
