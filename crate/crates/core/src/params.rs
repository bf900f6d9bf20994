//! Plasma state, derived parameters and regime classification.
//!
//! Everything here is Gaussian CGS. Two conventions are fixed once and
//! used everywhere downstream:
//!
//! * the thermal speed is defined by the equilibrium exponent
//!   `exp(-p^2 / m^2 v_t^2)`, i.e. `v_t = sqrt(2 k_B T / m)` and
//!   `<p_z^2> = m^2 v_t^2 / 2`;
//! * the magnetic moment uses the g-corrected form `mu = g hbar q / 4 m c`
//!   with `q = -e` for electrons, so `mu < 0`. Frequencies exposed here
//!   are magnitudes; signed values for wave algebra come from the
//!   `*_signed` accessors.

use crate::constants;
use crate::error::{QkinError, Result};
use serde::{Deserialize, Serialize};

/// One plasma state: electron density, temperature, static field, g-factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlasmaState {
    /// Electron number density [cm^-3].
    pub n_e: f64,
    /// Temperature [K].
    pub t: f64,
    /// Static magnetic field along z [G].
    pub b0: f64,
    /// Spin g-factor.
    pub g: f64,
}

impl PlasmaState {
    pub fn new(n_e: f64, t: f64, b0: f64, g: f64) -> Result<Self> {
        let s = Self { n_e, t, b0, g };
        s.validate()?;
        Ok(s)
    }

    /// State with the QED-corrected default g-factor.
    pub fn with_default_g(n_e: f64, t: f64, b0: f64) -> Result<Self> {
        Self::new(n_e, t, b0, constants::G_FACTOR)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.n_e.is_finite()
            && self.t.is_finite()
            && self.b0.is_finite()
            && self.g.is_finite()
            && self.n_e > 0.0
            && self.t >= 0.0
            && self.b0 >= 0.0
            && self.g > 0.0;
        if ok {
            Ok(())
        } else {
            Err(QkinError::InvalidInput(format!(
                "plasma state out of range: n_e={}, T={}, B0={}, g={}",
                self.n_e, self.t, self.b0, self.g
            )))
        }
    }
}

/// Derived frequencies, scales and dimensionless groups for one state.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlasmaParams {
    pub state: PlasmaState,
    /// Effective hbar = hbar_scale * hbar; hbar_scale = 1 is physical.
    pub hbar: f64,
    /// Plasma frequency [1/s].
    pub omega_p: f64,
    /// Cyclotron frequency magnitude e B0 / m c [1/s].
    pub omega_c: f64,
    /// Spin precession frequency magnitude (g/2) omega_c [1/s].
    pub omega_cg: f64,
    /// omega_cg - omega_c = (g/2 - 1) omega_c [1/s].
    pub delta_omega_c: f64,
    /// Thermal speed sqrt(2 k_B T / m) [cm/s].
    pub v_t: f64,
    /// Magnetic moment g hbar q / 4 m c, signed (negative for electrons) [erg/G].
    pub mu: f64,
    /// Zitterbewegung response speed hbar omega_p / 2 m c [cm/s].
    pub v_zitt: f64,
    /// Zitterbewegung amplitude hbar / 2 m c [cm].
    pub x_osc: f64,
    /// Fermi momentum hbar (3 pi^2 n)^(1/3) [g cm/s].
    pub p_f: f64,
    /// Fermi temperature p_F^2 / 2 m k_B [K].
    pub t_f: f64,
    /// hbar omega_p / m c^2.
    pub eps_q: f64,
    /// |mu| B0 / m c^2.
    pub eps_b: f64,
}

/// Derives all parameters for a state with the physical hbar.
pub fn derive_params(state: &PlasmaState) -> Result<PlasmaParams> {
    derive_params_scaled(state, 1.0)
}

/// Like [`derive_params`] but with hbar multiplied by `hbar_scale`.
/// `hbar_scale = 0` gives the classical limit of every quantum scale.
pub fn derive_params_scaled(state: &PlasmaState, hbar_scale: f64) -> Result<PlasmaParams> {
    state.validate()?;
    if !hbar_scale.is_finite() || hbar_scale < 0.0 {
        return Err(QkinError::InvalidInput(format!(
            "hbar_scale must be finite and >= 0, got {hbar_scale}"
        )));
    }
    let m = constants::M_E;
    let c = constants::C;
    let e = constants::E_CHARGE;
    let hbar = hbar_scale * constants::HBAR;

    let omega_p = (4.0 * std::f64::consts::PI * state.n_e * e * e / m).sqrt();
    let omega_c = e * state.b0 / (m * c);
    let omega_cg = 0.5 * state.g * omega_c;
    let v_t = (2.0 * constants::K_B * state.t / m).sqrt();
    // q = -e for the electron.
    let mu = state.g * hbar * (-e) / (4.0 * m * c);
    let v_zitt = hbar * omega_p / (2.0 * m * c);
    let x_osc = hbar / (2.0 * m * c);
    let p_f = hbar * (3.0 * std::f64::consts::PI.powi(2) * state.n_e).cbrt();
    let t_f = p_f * p_f / (2.0 * m * constants::K_B);
    let eps_q = hbar * omega_p / constants::MC2;
    let eps_b = mu.abs() * state.b0 / constants::MC2;

    Ok(PlasmaParams {
        state: *state,
        hbar,
        omega_p,
        omega_c,
        omega_cg,
        delta_omega_c: omega_cg - omega_c,
        v_t,
        mu,
        v_zitt,
        x_osc,
        p_f,
        t_f,
        eps_q,
        eps_b,
    })
}

impl PlasmaParams {
    /// Signed cyclotron frequency q B0 / m c (negative for electrons).
    pub fn omega_c_signed(&self) -> f64 {
        -self.omega_c
    }

    /// Signed spin precession frequency 2 mu B0 / hbar.
    pub fn omega_cg_signed(&self) -> f64 {
        -self.omega_cg
    }

    /// Signed resonance offset omega_cg - omega_c.
    pub fn delta_omega_c_signed(&self) -> f64 {
        -self.delta_omega_c
    }

    /// Spin polarization argument a = mu B0 / k_B T (signed; 0 when T = 0
    /// is not defined and returns +-inf accordingly).
    pub fn spin_polarization_arg(&self) -> f64 {
        self.mu * self.state.b0 / (constants::K_B * self.state.t)
    }

    /// Thermal momentum m v_t [g cm/s].
    pub fn p_t(&self) -> f64 {
        constants::M_E * self.v_t
    }

    /// <p_z^2> of the thermal equilibrium, m^2 v_t^2 / 2.
    pub fn pz2_moment(&self) -> f64 {
        let pt = self.p_t();
        0.5 * pt * pt
    }
}

/// Classification flags driven by the two coupling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeLabels {
    /// Gamma_F >= 1: correlations matter, mean-field theory unreliable.
    pub strongly_coupled: bool,
    /// hbar omega_p / k_B T >= 1 or T_F / T >= 1.
    pub quantum: bool,
    /// Neither quantum nor strongly coupled.
    pub classical: bool,
    /// Gamma_F < 1.
    pub mean_field_valid: bool,
}

/// Dimensionless regime report for one state.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RegimeReport {
    /// Gamma = E_p / k_B T with E_p = e^2/a, a = (3/4 pi n)^(1/3).
    /// `None` when T = 0 (infinite coupling).
    pub gamma: Option<f64>,
    /// Gamma_F = E_p / k_B (T + T_F); finite for T -> 0 when T_F > 0.
    pub gamma_f: f64,
    pub hbar_wp_over_kt: f64,
    pub tf_over_t: f64,
    /// m v_zitt / p_F = omega_p / (2 c (3 pi^2 n)^(1/3)).
    pub zitt_fermi_ratio: f64,
    pub labels: RegimeLabels,
}

/// Nearest-neighbor Coulomb energy E_p = e^2 / a, a = (3 / 4 pi n)^(1/3).
pub fn nearest_neighbor_energy(n_e: f64) -> f64 {
    let a = (3.0 / (4.0 * std::f64::consts::PI * n_e)).cbrt();
    constants::E_CHARGE * constants::E_CHARGE / a
}

/// Classifies a plasma state in the density-temperature plane.
pub fn classify_regime(state: &PlasmaState) -> Result<RegimeReport> {
    let p = derive_params(state)?;
    let e_p = nearest_neighbor_energy(state.n_e);
    let kt = constants::K_B * state.t;
    let gamma = if state.t > 0.0 { Some(e_p / kt) } else { None };
    let gamma_f = e_p / (constants::K_B * (state.t + p.t_f));
    let hbar_wp_over_kt = if state.t > 0.0 {
        constants::HBAR * p.omega_p / kt
    } else {
        f64::INFINITY
    };
    let tf_over_t = if state.t > 0.0 { p.t_f / state.t } else { f64::INFINITY };
    let zitt_fermi_ratio = zitt_fermi_ratio(state.n_e);

    let strongly_coupled = gamma_f >= 1.0;
    let quantum = hbar_wp_over_kt >= 1.0 || tf_over_t >= 1.0;
    let labels = RegimeLabels {
        strongly_coupled,
        quantum,
        classical: !strongly_coupled && !quantum,
        mean_field_valid: gamma_f < 1.0,
    };
    Ok(RegimeReport {
        gamma,
        gamma_f,
        hbar_wp_over_kt,
        tf_over_t,
        zitt_fermi_ratio,
        labels,
    })
}

/// Ratio m v_zitt / p_F = omega_p / (2 c (3 pi^2 n)^(1/3)); scales as n^(1/6).
pub fn zitt_fermi_ratio(n_e: f64) -> f64 {
    assert!(n_e > 0.0 && n_e.is_finite(), "density must be positive");
    let m = constants::M_E;
    let e = constants::E_CHARGE;
    let omega_p = (4.0 * std::f64::consts::PI * n_e * e * e / m).sqrt();
    omega_p / (2.0 * constants::C * (3.0 * std::f64::consts::PI.powi(2) * n_e).cbrt())
}
